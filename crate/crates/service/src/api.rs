//! Wire types.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crashsolver_core::crash::{BugCategory, CaseRecord, CrashDescription, CrashInfoRecord, Language};
use crashsolver_core::engine::{
    Action, ActionKind, Event, Limits, Outcome, Phase, SessionState, StrategyConfig, UserRequest,
};
use crashsolver_core::gateway::TranscriptRecord;

/// Crash information as either a raw trace or structured fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CrashInfoInput {
    Raw(String),
    Fields(CrashInfoRecord),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionInput {
    #[serde(default)]
    pub language: Option<String>,
    #[serde(default)]
    pub buggy_code: Option<String>,
    #[serde(default)]
    pub crash_info: Option<CrashInfoInput>,
    #[serde(default)]
    pub crash_context: Option<String>,
    #[serde(default)]
    pub loc_lines: Option<Vec<i64>>,
}

impl DescriptionInput {
    pub fn language(&self) -> Result<Language, String> {
        self.language.as_deref().unwrap_or("java").parse()
    }

    /// Blank fields count as absent.
    pub fn to_description(&self) -> Result<CrashDescription, String> {
        let language = self.language()?;
        let present = |s: &Option<String>| s.clone().filter(|s| !s.trim().is_empty());
        let crash_info = match &self.crash_info {
            Some(CrashInfoInput::Raw(raw)) if !raw.trim().is_empty() => Some(CrashInfoRecord {
                trace_raw: raw.clone(),
                ..CrashInfoRecord::default()
            }),
            Some(CrashInfoInput::Fields(f)) => Some(f.clone()),
            _ => None,
        };
        if let Some(locs) = &self.loc_lines {
            if locs.iter().any(|&l| l < 1) {
                return Err("loc_lines must be positive".into());
            }
        }
        let record = CaseRecord {
            buggy_code: present(&self.buggy_code),
            crash_info,
            crash_context: present(&self.crash_context),
            loc_lines: self.loc_lines.clone(),
            ..CaseRecord::default()
        };
        Ok(record.description(language))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    /// A case from the service's case pool; alternative to `description`.
    #[serde(default)]
    pub case_id: Option<String>,
    #[serde(default)]
    pub description: Option<DescriptionInput>,
    /// Required with `description`; defaults to the pool case's category.
    #[serde(default)]
    pub category: Option<BugCategory>,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub limits: Limits,
    /// Name of a configured provider; the service default when absent.
    #[serde(default)]
    pub provider: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientEventKind {
    UserAnswer,
    ValidationResult,
    RequestRefinement,
    RequestNewSolution,
    Abandon,
}

/// `payload` is text for `user_answer`, a boolean for `validation_result`
/// and absent otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEvent {
    pub kind: ClientEventKind,
    #[serde(default)]
    pub payload: Option<serde_json::Value>,
}

impl ClientEvent {
    pub fn user_answer(text: impl Into<String>) -> Self {
        ClientEvent {
            kind: ClientEventKind::UserAnswer,
            payload: Some(serde_json::Value::String(text.into())),
        }
    }

    pub fn validation(fixed: bool) -> Self {
        ClientEvent {
            kind: ClientEventKind::ValidationResult,
            payload: Some(serde_json::Value::Bool(fixed)),
        }
    }

    pub fn bare(kind: ClientEventKind) -> Self {
        ClientEvent { kind, payload: None }
    }

    pub fn to_event(&self) -> Result<Event, String> {
        use serde_json::Value;
        let payload = self.payload.as_ref().filter(|v| !v.is_null());
        match (self.kind, payload) {
            (ClientEventKind::UserAnswer, Some(Value::String(text))) => Ok(Event::UserAnswer { text: text.clone() }),
            (ClientEventKind::UserAnswer, _) => Err("user_answer needs a text payload".into()),
            (ClientEventKind::ValidationResult, Some(Value::Bool(fixed))) => {
                Ok(Event::ValidationResult { fixed: *fixed })
            }
            (ClientEventKind::ValidationResult, _) => Err("validation_result needs a boolean payload".into()),
            (kind, Some(_)) => Err(format!("{kind:?} takes no payload")),
            (ClientEventKind::RequestRefinement, None) => Ok(Event::UserRequest {
                request: UserRequest::Refine,
            }),
            (ClientEventKind::RequestNewSolution, None) => Ok(Event::UserRequest {
                request: UserRequest::NewSolution,
            }),
            (ClientEventKind::Abandon, None) => Ok(Event::UserRequest {
                request: UserRequest::Abandon,
            }),
        }
    }
}

/// A provider failure recorded on a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionError {
    pub at: DateTime<Utc>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub case_id: Option<String>,
    pub category: BugCategory,
    pub phase: Phase,
    pub outcome: Outcome,
    pub rounds: u32,
    pub validation_attempts: u32,
    pub max_retries: u32,
    pub created_at: DateTime<Utc>,
    pub last_action: ActionKind,
    pub provider: String,
    pub error: Option<SessionError>,
}

impl SessionSummary {
    pub fn of(state: &SessionState, created_at: DateTime<Utc>, provider: &str, error: Option<SessionError>) -> Self {
        SessionSummary {
            session_id: state.session_id.clone(),
            case_id: state.case_id.clone(),
            category: state.category,
            phase: state.phase,
            outcome: state.outcome,
            rounds: state.rounds,
            validation_attempts: state.validation_attempts,
            max_retries: state.max_retries,
            created_at,
            last_action: state.last_action.kind(),
            provider: provider.to_string(),
            error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub summary: SessionSummary,
    pub pending_action: Action,
    pub state: SessionState,
    pub transcript: Vec<TranscriptRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub session_id: String,
    pub phase: Phase,
    pub outcome: Outcome,
    pub validation_attempts: u32,
    pub action: Action,
    pub new_messages: Vec<TranscriptRecord>,
    pub error: Option<SessionError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: serde_json::Value,
}
