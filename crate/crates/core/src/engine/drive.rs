//! Runs provider calls until the session needs the user.

use chrono::{DateTime, Utc};
use thiserror::Error;

use super::{step_at, Action, EngineError, Event, SessionState};
use crate::gateway::{GatewayError, Provider};

#[derive(Debug, Error)]
pub enum DriveError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Where a session stopped. `error` is set when a provider call or a reply
/// failed; `state` and `action` are then the last good ones.
#[derive(Debug)]
pub struct Advance {
    pub state: SessionState,
    pub action: Action,
    /// Assistant replies folded in, in order.
    pub replies: Vec<String>,
    pub error: Option<DriveError>,
}

/// Answers every `SendPrompt` with the provider's reply.
pub fn advance(
    mut state: SessionState,
    mut action: Action,
    provider: &mut dyn Provider,
    mut clock: impl FnMut() -> DateTime<Utc>,
) -> Advance {
    let mut replies = Vec::new();
    while let Action::SendPrompt { .. } = action {
        let reply = match provider.complete(&state.provider_conversation()) {
            Ok(r) => r,
            Err(e) => {
                return Advance {
                    state,
                    action,
                    replies,
                    error: Some(e.into()),
                }
            }
        };
        match step_at(&state, Event::AssistantReply { text: reply.clone() }, clock()) {
            Ok((s, a)) => {
                state = s;
                action = a;
                replies.push(reply);
            }
            Err(e) => {
                return Advance {
                    state,
                    action,
                    replies,
                    error: Some(e.into()),
                }
            }
        }
    }
    Advance {
        state,
        action,
        replies,
        error: None,
    }
}
