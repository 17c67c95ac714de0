//! HTTP service over the session engine.
//!
//! Each session lives behind its own async mutex; a request holds it for the
//! whole event, provider calls included, so events on one session apply one
//! at a time. Every change is appended to the session's event log before the
//! response is sent, and startup rebuilds sessions by replaying those logs
//! through the engine.

pub mod api;
mod store;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::json;
use tokio::sync::{Mutex, RwLock};

use crashsolver_core::crash::CrashBugCase;
use crashsolver_core::engine::{
    advance, start_session, step_at, Action, Awaiting, EngineError, Event, SessionState,
};
use crashsolver_core::gateway::{GatewayError, Provider, ProviderConfig};

pub use api::*;
pub use store::{LogEntry, Store};

pub type ProviderFactory = Arc<dyn Fn() -> Result<Box<dyn Provider>, GatewayError> + Send + Sync>;

/// Named provider constructors. Sessions get their own provider instance, so
/// replay cursors and scripts are per session.
#[derive(Clone)]
pub struct ProviderRegistry {
    factories: BTreeMap<String, ProviderFactory>,
    default: String,
}

impl ProviderRegistry {
    pub fn new(default: impl Into<String>) -> Self {
        ProviderRegistry {
            factories: BTreeMap::new(),
            default: default.into(),
        }
    }

    pub fn with_config(mut self, name: impl Into<String>, config: ProviderConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        self.factories.insert(name.into(), Arc::new(move || config.build()));
        Ok(self)
    }

    pub fn with_factory(mut self, name: impl Into<String>, factory: ProviderFactory) -> Self {
        self.factories.insert(name.into(), factory);
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    fn resolve(&self, name: Option<&str>) -> Option<(String, ProviderFactory)> {
        let name = name.unwrap_or(&self.default);
        self.factories.get(name).map(|f| (name.to_string(), f.clone()))
    }
}

pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub providers: ProviderRegistry,
    /// Cases addressable by `case_id` in create requests.
    pub cases: Vec<CrashBugCase>,
}

struct Slot {
    state: SessionState,
    action: Action,
    provider_name: String,
    provider: Option<Box<dyn Provider>>,
    created_at: DateTime<Utc>,
    error: Option<SessionError>,
}

impl Slot {
    fn summary(&self) -> SessionSummary {
        SessionSummary::of(&self.state, self.created_at, &self.provider_name, self.error.clone())
    }

    fn view(&self) -> SessionView {
        SessionView {
            summary: self.summary(),
            pending_action: self.action.clone(),
            state: self.state.clone(),
            transcript: self.state.transcript(),
        }
    }
}

pub struct Service {
    store: Store,
    providers: ProviderRegistry,
    cases: HashMap<String, CrashBugCase>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Slot>>>>,
    index: std::sync::Mutex<BTreeMap<String, SessionSummary>>,
    load_errors: Vec<String>,
}

pub type AppState = Arc<Service>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                detail: serde_json::Value::Null,
            },
        }
    }

    fn detail(mut self, detail: impl Serialize) -> Self {
        self.body.detail = serde_json::to_value(detail).unwrap_or_default();
        self
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_request", message)
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
    }

    fn storage(e: std::io::Error) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", e.to_string())
    }

    fn engine(e: EngineError) -> Self {
        match e {
            EngineError::SessionTerminated => Self::new(StatusCode::CONFLICT, "session_terminated", e.to_string()),
            EngineError::IllegalEvent { .. } => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "illegal_event", e.to_string()),
            other => Self::bad_request(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// A session rebuilt from its log.
struct Replayed {
    slot: Slot,
    assistant_replies: usize,
}

fn replay(entries: &[LogEntry]) -> Result<Replayed, String> {
    let Some(LogEntry::Created {
        at,
        session_id,
        case_id,
        description,
        category,
        strategy,
        limits,
        provider,
    }) = entries.first()
    else {
        return Err("log does not start with a created entry".into());
    };
    let input = crashsolver_core::engine::SessionInput {
        case_id: case_id.clone(),
        description: description.clone(),
    };
    let (mut state, mut action) =
        start_session(session_id.clone(), input, *category, strategy.clone(), limits.clone(), *at)
            .map_err(|e| e.to_string())?;
    let mut error = None;
    let mut assistant_replies = 0;
    for entry in &entries[1..] {
        match entry {
            LogEntry::Event { at, event } => {
                if matches!(event, Event::AssistantReply { .. }) {
                    assistant_replies += 1;
                }
                (state, action) = step_at(&state, event.clone(), *at).map_err(|e| e.to_string())?;
                error = None;
            }
            LogEntry::ProviderError { at, message } => {
                error = Some(SessionError {
                    at: *at,
                    message: message.clone(),
                })
            }
            LogEntry::Created { .. } => return Err("second created entry".into()),
        }
    }
    Ok(Replayed {
        slot: Slot {
            state,
            action,
            provider_name: provider.clone(),
            provider: None,
            created_at: *at,
            error,
        },
        assistant_replies,
    })
}

/// Sends pending prompts until the session needs the user, logging replies.
fn drive(slot: &mut Slot, at: DateTime<Utc>, log: &mut Vec<LogEntry>) {
    if slot.action.awaiting() != Awaiting::Assistant {
        return;
    }
    let Some(provider) = slot.provider.as_mut() else {
        let message = format!("provider {:?} is unavailable", slot.provider_name);
        slot.error = Some(SessionError {
            at,
            message: message.clone(),
        });
        log.push(LogEntry::ProviderError { at, message });
        return;
    };
    let adv = advance(slot.state.clone(), slot.action.clone(), provider.as_mut(), || at);
    for text in adv.replies {
        log.push(LogEntry::Event {
            at,
            event: Event::AssistantReply { text },
        });
    }
    slot.state = adv.state;
    slot.action = adv.action;
    slot.error = None;
    if let Some(e) = adv.error {
        let message = e.to_string();
        slot.error = Some(SessionError {
            at,
            message: message.clone(),
        });
        log.push(LogEntry::ProviderError { at, message });
    }
}

impl Service {
    /// Opens the data directory and resumes every logged session.
    pub fn open(config: ServiceConfig) -> std::io::Result<AppState> {
        let store = Store::open(&config.data_dir)?;
        let mut sessions = HashMap::new();
        let mut index = BTreeMap::new();
        let mut load_errors = Vec::new();
        for (id, loaded) in store.load_all()? {
            let replayed = loaded.and_then(|entries| replay(&entries));
            match replayed {
                Ok(Replayed {
                    mut slot,
                    assistant_replies,
                }) => {
                    if let Some((_, factory)) = config.providers.resolve(Some(&slot.provider_name)) {
                        if let Ok(mut p) = factory() {
                            p.fast_forward(assistant_replies);
                            slot.provider = Some(p);
                        }
                    }
                    index.insert(id.clone(), slot.summary());
                    sessions.insert(id, Arc::new(Mutex::new(slot)));
                }
                Err(e) => {
                    tracing::warn!(session = %id, error = %e, "session log not loaded");
                    load_errors.push(format!("{id}: {e}"));
                }
            }
        }
        let service = Service {
            store,
            providers: config.providers,
            cases: config.cases.into_iter().map(|c| (c.id.clone(), c)).collect(),
            sessions: RwLock::new(sessions),
            index: std::sync::Mutex::new(index),
            load_errors,
        };
        service.write_index()?;
        Ok(Arc::new(service))
    }

    /// Logs that could not be replayed at startup.
    pub fn load_errors(&self) -> &[String] {
        &self.load_errors
    }

    pub fn data_dir(&self) -> &std::path::Path {
        self.store.root()
    }

    fn write_index(&self) -> std::io::Result<()> {
        let index = self.index.lock().unwrap();
        let mut all: Vec<&SessionSummary> = index.values().collect();
        all.sort_by(|a, b| (a.created_at, &a.session_id).cmp(&(b.created_at, &b.session_id)));
        self.store.write_index(&all)
    }

    fn record(&self, slot: &Slot, log: &[LogEntry]) -> Result<(), ApiError> {
        self.store.append(&slot.state.session_id, log).map_err(ApiError::storage)?;
        self.index
            .lock()
            .unwrap()
            .insert(slot.state.session_id.clone(), slot.summary());
        self.write_index().map_err(ApiError::storage)
    }

    fn create_blocking(&self, req: CreateSessionRequest) -> Result<(StatusCode, StepResponse), ApiError> {
        let (case_id, description, category) = match (&req.case_id, &req.description) {
            (Some(_), Some(_)) => return Err(ApiError::bad_request("give either case_id or description, not both")),
            (Some(id), None) => {
                let case = self
                    .cases
                    .get(id)
                    .ok_or_else(|| ApiError::bad_request(format!("unknown case {id}")))?;
                (Some(id.clone()), case.description.clone(), req.category.unwrap_or(case.category))
            }
            (None, Some(d)) => {
                let description = d.to_description().map_err(ApiError::bad_request)?;
                let category = req
                    .category
                    .ok_or_else(|| ApiError::bad_request("category is required with a description"))?;
                (None, description, category)
            }
            (None, None) => return Err(ApiError::bad_request("case_id or description is required")),
        };
        if let Err(e) = description.validate() {
            return Err(ApiError::bad_request(e.to_string()).detail(description.violations()));
        }
        let (provider_name, factory) = self
            .providers
            .resolve(req.provider.as_deref())
            .ok_or_else(|| ApiError::bad_request(format!("unknown provider {:?}", req.provider)))?;

        let at = Utc::now();
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let input = crashsolver_core::engine::SessionInput {
            case_id: case_id.clone(),
            description: description.clone(),
        };
        let (state, action) = start_session(&session_id, input, category, req.strategy.clone(), req.limits.clone(), at)
            .map_err(ApiError::engine)?;

        let mut log = vec![LogEntry::Created {
            at,
            session_id: session_id.clone(),
            case_id,
            description,
            category,
            strategy: req.strategy,
            limits: req.limits,
            provider: provider_name.clone(),
        }];
        let mut slot = Slot {
            state,
            action,
            provider_name,
            provider: None,
            created_at: at,
            error: None,
        };
        match factory() {
            Ok(p) => slot.provider = Some(p),
            Err(e) => tracing::warn!(error = %e, "provider could not be built"),
        }
        drive(&mut slot, at, &mut log);
        self.record(&slot, &log)?;

        let response = StepResponse {
            session_id: session_id.clone(),
            phase: slot.state.phase,
            outcome: slot.state.outcome,
            validation_attempts: slot.state.validation_attempts,
            action: slot.action.clone(),
            new_messages: slot.state.transcript(),
            error: slot.error.clone(),
        };
        let failed = slot.error.is_some();
        self.sessions
            .blocking_write()
            .insert(session_id, Arc::new(Mutex::new(slot)));
        if failed {
            return Err(provider_failure(&response));
        }
        Ok((StatusCode::CREATED, response))
    }

    fn event_blocking(&self, slot: &mut Slot, event: Event) -> Result<StepResponse, ApiError> {
        let at = Utc::now();
        let before = slot.state.conversation.len();
        let mut log = Vec::new();

        if slot.state.phase == crashsolver_core::engine::Phase::Terminal {
            return Err(ApiError::engine(EngineError::SessionTerminated));
        }
        // A session stalled by a provider failure retries the pending prompt first.
        drive(slot, at, &mut log);
        if slot.error.is_some() {
            self.record(slot, &log)?;
            return Err(provider_failure(&self.step_response(slot, before)));
        }

        match step_at(&slot.state, event.clone(), at) {
            Ok((state, action)) => {
                slot.state = state;
                slot.action = action;
                log.push(LogEntry::Event { at, event });
            }
            Err(e) => {
                if !log.is_empty() {
                    self.record(slot, &log)?;
                }
                return Err(ApiError::engine(e));
            }
        }
        drive(slot, at, &mut log);
        self.record(slot, &log)?;
        let response = self.step_response(slot, before);
        if slot.error.is_some() {
            return Err(provider_failure(&response));
        }
        Ok(response)
    }

    fn step_response(&self, slot: &Slot, before: usize) -> StepResponse {
        let transcript = slot.state.transcript();
        StepResponse {
            session_id: slot.state.session_id.clone(),
            phase: slot.state.phase,
            outcome: slot.state.outcome,
            validation_attempts: slot.state.validation_attempts,
            action: slot.action.clone(),
            new_messages: transcript[before.min(transcript.len())..].to_vec(),
            error: slot.error.clone(),
        }
    }

    async fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, ApiError> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }
}

fn provider_failure(response: &StepResponse) -> ApiError {
    let message = response
        .error
        .as_ref()
        .map(|e| e.message.clone())
        .unwrap_or_else(|| "provider failure".into());
    ApiError::new(StatusCode::BAD_GATEWAY, "provider_failure", message).detail(response)
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

async fn join<T: Send + 'static>(task: tokio::task::JoinHandle<Result<T, ApiError>>) -> Result<T, ApiError> {
    task.await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn create_session(State(service): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSessionRequest = parse_json(&body)?;
    let (status, response) = join(tokio::task::spawn_blocking(move || service.create_blocking(req))).await?;
    Ok((status, Json(response)).into_response())
}

async fn post_event(
    State(service): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<StepResponse>, ApiError> {
    let slot = service.slot(&id).await?;
    let client: ClientEvent = parse_json(&body)?;
    let event = client.to_event().map_err(ApiError::bad_request)?;
    let mut guard = slot.lock_owned().await;
    let response = join(tokio::task::spawn_blocking(move || {
        service.event_blocking(&mut guard, event)
    }))
    .await?;
    Ok(Json(response))
}

async fn get_session(State(service): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let slot = service.slot(&id).await?;
    let guard = slot.lock().await;
    Ok(Json(guard.view()))
}

async fn list_sessions(State(service): State<AppState>) -> Json<Vec<SessionSummary>> {
    let index = service.index.lock().unwrap();
    let mut all: Vec<SessionSummary> = index.values().cloned().collect();
    all.sort_by(|a, b| (a.created_at, &a.session_id).cmp(&(b.created_at, &b.session_id)));
    Json(all)
}

async fn health(State(service): State<AppState>) -> Json<serde_json::Value> {
    let sessions = service.sessions.read().await.len();
    Json(json!({
        "status": "ok",
        "sessions": sessions,
        "providers": service.providers.names().collect::<Vec<_>>(),
    }))
}

pub fn router(service: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/sessions", post(create_session).get(list_sessions))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/events", post(post_event))
        .with_state(service)
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, service: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
