//! Chat-completion providers.
//!
//! Three backends sit behind [`Provider`]: an OpenAI-compatible HTTP client,
//! a replay provider that serves a recorded transcript, and a scripted mock.
//! [`Recorder`] wraps any of them and appends each exchange to a transcript
//! file that the replay provider can serve later.

mod http;
pub mod transcript;

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpChatProvider;
pub use transcript::{read_transcript, write_transcript, TranscriptRecord, TranscriptSink};

use crate::engine::{classify_response, Annotation};

pub const ENV_API_KEY: &str = "CRASHSOLVER_API_KEY";
pub const ENV_BASE_URL: &str = "CRASHSOLVER_BASE_URL";
pub const ENV_MODEL: &str = "CRASHSOLVER_MODEL";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid conversation: {0}")]
    InvalidConversation(String),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("replay mismatch: recorded prompt {expected:?}, requested prompt {actual:?}")]
    ReplayMismatch { expected: String, actual: String },
    #[error("script exhausted")]
    ScriptExhausted,
    #[error("transcript sink failed: {0}")]
    Sink(String),
    #[error("invalid transcript: {0}")]
    InvalidTranscript(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f32,
    pub max_output_tokens: Option<u32>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            temperature: 0.0,
            max_output_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub messages: Vec<ChatMessage>,
    pub model_id: String,
    pub params: GenerationParams,
}

impl Conversation {
    pub fn new(messages: Vec<ChatMessage>) -> Self {
        Conversation {
            messages,
            model_id: String::new(),
            params: GenerationParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.messages.last() {
            Some(m) if m.role == Role::User => Ok(()),
            Some(m) => Err(GatewayError::InvalidConversation(format!(
                "last message has role {}, expected user",
                m.role.as_str()
            ))),
            None => Err(GatewayError::InvalidConversation("no messages".into())),
        }
    }

    pub fn last_user_text(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }
}

/// A chat-completion backend.
pub trait Provider: Send {
    fn complete(&mut self, conversation: &Conversation) -> Result<String, GatewayError>;

    /// Skips `turns` responses that were already consumed before a restart.
    /// Stateless providers ignore this.
    fn fast_forward(&mut self, _turns: usize) {}
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn complete(&mut self, conversation: &Conversation) -> Result<String, GatewayError> {
        (**self).complete(conversation)
    }

    fn fast_forward(&mut self, turns: usize) {
        (**self).fast_forward(turns)
    }
}

fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Serves the assistant turns of a transcript in order, checking that each
/// request's last user message matches the recorded one.
#[derive(Debug, Clone)]
pub struct ReplayProvider {
    exchanges: Vec<(String, String)>,
    cursor: usize,
}

impl ReplayProvider {
    pub fn from_records(records: &[TranscriptRecord]) -> Self {
        let exchanges = records
            .windows(2)
            .filter(|w| w[0].role == Role::User && w[1].role == Role::Assistant)
            .map(|w| (w[0].text.clone(), w[1].text.clone()))
            .collect();
        ReplayProvider {
            exchanges,
            cursor: 0,
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Ok(Self::from_records(&read_transcript(path)?))
    }

    pub fn remaining(&self) -> usize {
        self.exchanges.len() - self.cursor
    }
}

impl Provider for ReplayProvider {
    fn complete(&mut self, conversation: &Conversation) -> Result<String, GatewayError> {
        conversation.validate()?;
        let (recorded, reply) = self
            .exchanges
            .get(self.cursor)
            .ok_or(GatewayError::ScriptExhausted)?;
        let requested = conversation.last_user_text().unwrap_or_default();
        if normalize(recorded) != normalize(requested) {
            return Err(GatewayError::ReplayMismatch {
                expected: recorded.clone(),
                actual: requested.to_string(),
            });
        }
        self.cursor += 1;
        Ok(reply.clone())
    }

    fn fast_forward(&mut self, turns: usize) {
        self.cursor = (self.cursor + turns).min(self.exchanges.len());
    }
}

/// Returns scripted replies in order, whatever was asked.
#[derive(Debug, Clone, Default)]
pub struct ScriptedProvider {
    script: VecDeque<String>,
}

impl ScriptedProvider {
    pub fn new<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedProvider {
            script: lines.into_iter().map(Into::into).collect(),
        }
    }

    /// Script files hold one JSON string per line.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut lines = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let s: String = serde_json::from_str(line).map_err(|e| {
                GatewayError::InvalidConfig(format!("{} line {}: {e}", path.display(), idx + 1))
            })?;
            lines.push(s);
        }
        Ok(Self::new(lines))
    }
}

impl Provider for ScriptedProvider {
    fn complete(&mut self, conversation: &Conversation) -> Result<String, GatewayError> {
        conversation.validate()?;
        self.script.pop_front().ok_or(GatewayError::ScriptExhausted)
    }

    fn fast_forward(&mut self, turns: usize) {
        let n = turns.min(self.script.len());
        self.script.drain(..n);
    }
}

/// Wraps a provider and appends every request/response pair to a transcript.
#[derive(Debug)]
pub struct Recorder<P> {
    inner: P,
    sink: TranscriptSink,
}

/// Wraps `provider` so that each exchange is appended to `sink`.
pub fn record<P: Provider>(provider: P, sink: impl AsRef<Path>) -> Result<Recorder<P>, GatewayError> {
    Ok(Recorder {
        inner: provider,
        sink: TranscriptSink::open(sink)?,
    })
}

impl<P> Recorder<P> {
    pub fn into_inner(self) -> P {
        self.inner
    }
}

impl<P: Provider> Provider for Recorder<P> {
    fn complete(&mut self, conversation: &Conversation) -> Result<String, GatewayError> {
        let reply = self.inner.complete(conversation)?;
        let prompt = conversation.last_user_text().unwrap_or_default();
        self.sink.append(Role::User, Some(Annotation::Prompt), prompt)?;
        self.sink
            .append(Role::Assistant, classify_response(&reply).ok(), &reply)?;
        Ok(reply)
    }

    fn fast_forward(&mut self, turns: usize) {
        self.inner.fast_forward(turns)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HttpChat,
    Replay,
    ScriptedMock,
}

/// Transport retries with exponential backoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub multiplier: f64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 500,
            multiplier: 2.0,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Sleep before each retry; `max_attempts - 1` entries, non-decreasing.
    pub fn delays(&self) -> Vec<Duration> {
        let factor = self.multiplier.max(1.0);
        let mut current = self.initial_backoff_ms as f64;
        (1..self.max_attempts.max(1))
            .map(|_| {
                let ms = current.min(self.max_backoff_ms as f64);
                current *= factor;
                Duration::from_millis(ms as u64)
            })
            .collect()
    }
}

/// How to reach a provider. Credentials are referenced by environment
/// variable name, never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub credentials_env: Option<String>,
    pub timeout_ms: u64,
    pub retry: RetryPolicy,
    pub transcript_path: Option<PathBuf>,
    pub script_path: Option<PathBuf>,
    #[serde(default)]
    pub script: Vec<String>,
}

impl ProviderConfig {
    fn base(kind: ProviderKind) -> Self {
        ProviderConfig {
            kind,
            endpoint: None,
            model: String::new(),
            credentials_env: None,
            timeout_ms: 60_000,
            retry: RetryPolicy::default(),
            transcript_path: None,
            script_path: None,
            script: Vec::new(),
        }
    }

    pub fn http(endpoint: impl Into<String>, model: impl Into<String>, credentials_env: impl Into<String>) -> Self {
        ProviderConfig {
            endpoint: Some(endpoint.into()),
            model: model.into(),
            credentials_env: Some(credentials_env.into()),
            ..Self::base(ProviderKind::HttpChat)
        }
    }

    /// HTTP provider configured from `CRASHSOLVER_BASE_URL` and `CRASHSOLVER_MODEL`,
    /// authenticating with `CRASHSOLVER_API_KEY`.
    pub fn from_env() -> Self {
        let endpoint =
            std::env::var(ENV_BASE_URL).unwrap_or_else(|_| "https://api.openai.com/v1".into());
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "gpt-3.5-turbo".into());
        Self::http(endpoint, model, ENV_API_KEY)
    }

    pub fn replay(path: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            transcript_path: Some(path.into()),
            ..Self::base(ProviderKind::Replay)
        }
    }

    pub fn scripted<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ProviderConfig {
            script: lines.into_iter().map(Into::into).collect(),
            ..Self::base(ProviderKind::ScriptedMock)
        }
    }

    pub fn scripted_file(path: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            script_path: Some(path.into()),
            ..Self::base(ProviderKind::ScriptedMock)
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        match self.kind {
            ProviderKind::HttpChat => {
                if self.endpoint.as_deref().is_none_or(str::is_empty) {
                    return Err(GatewayError::InvalidConfig("http_chat requires an endpoint".into()));
                }
                if self.credentials_env.as_deref().is_none_or(str::is_empty) {
                    return Err(GatewayError::InvalidConfig(
                        "http_chat requires a credentials reference".into(),
                    ));
                }
            }
            ProviderKind::Replay => {
                if self.transcript_path.is_none() {
                    return Err(GatewayError::InvalidConfig("replay requires a transcript path".into()));
                }
            }
            ProviderKind::ScriptedMock => {}
        }
        if self.retry.max_attempts == 0 {
            return Err(GatewayError::InvalidConfig("retry.max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    /// Instantiates a fresh provider. Replay and scripted providers start at
    /// the beginning of their script.
    pub fn build(&self) -> Result<Box<dyn Provider>, GatewayError> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::HttpChat => {
                let env = self.credentials_env.as_deref().unwrap_or(ENV_API_KEY);
                let key = std::env::var(env).ok().filter(|k| !k.is_empty());
                Box::new(HttpChatProvider::new(
                    self.endpoint.as_deref().unwrap_or_default(),
                    self.model.clone(),
                    key,
                    Duration::from_millis(self.timeout_ms),
                    self.retry.clone(),
                )?)
            }
            ProviderKind::Replay => Box::new(ReplayProvider::open(
                self.transcript_path.as_ref().expect("validated"),
            )?),
            ProviderKind::ScriptedMock => match &self.script_path {
                Some(path) => Box::new(ScriptedProvider::open(path)?),
                None => Box::new(ScriptedProvider::new(self.script.clone())),
            },
        })
    }
}

/// One completion against a freshly built provider.
pub fn complete(config: &ProviderConfig, conversation: &Conversation) -> Result<String, GatewayError> {
    config.build()?.complete(conversation)
}
