//! OpenAI-compatible chat-completion client.

use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Conversation, GatewayError, Provider, RetryPolicy};

#[derive(Debug)]
pub struct HttpChatProvider {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

impl HttpChatProvider {
    pub fn new(
        endpoint: &str,
        model: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
        retry: RetryPolicy,
    ) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::InvalidConfig(e.to_string()))?;
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        Ok(HttpChatProvider {
            client,
            url,
            model: model.into(),
            api_key,
            retry,
        })
    }

    fn body(&self, conv: &Conversation) -> serde_json::Value {
        let model = if conv.model_id.is_empty() {
            &self.model
        } else {
            &conv.model_id
        };
        let messages: Vec<_> = conv
            .messages
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect();
        let mut body = json!({
            "model": model,
            "messages": messages,
            "temperature": conv.params.temperature,
        });
        if let Some(max) = conv.params.max_output_tokens {
            body["max_tokens"] = json!(max);
        }
        body
    }
}

impl HttpChatProvider {
    /// Providers sometimes echo the key back in error bodies.
    fn redact(&self, text: String) -> String {
        match self.api_key.as_deref() {
            Some(key) if text.contains(key) => text.replace(key, "[redacted]"),
            _ => text,
        }
    }
}

impl Provider for HttpChatProvider {
    fn complete(&mut self, conv: &Conversation) -> Result<String, GatewayError> {
        self.send(conv).map_err(|e| match e {
            GatewayError::Provider { status, body } => GatewayError::Provider {
                status,
                body: self.redact(body),
            },
            GatewayError::Transport { attempts, message } => GatewayError::Transport {
                attempts,
                message: self.redact(message),
            },
            other => other,
        })
    }
}

impl HttpChatProvider {
    fn send(&self, conv: &Conversation) -> Result<String, GatewayError> {
        conv.validate()?;
        let body = self.body(conv);
        let delays = self.retry.delays();
        let mut last_error = String::new();
        for attempt in 0..self.retry.max_attempts.max(1) {
            if attempt > 0 {
                thread::sleep(delays[attempt as usize - 1]);
            }
            let mut req = self.client.post(&self.url).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = match req.send() {
                Ok(resp) => resp,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            let status = resp.status();
            let text = resp.text().map_err(|e| GatewayError::Transport {
                attempts: attempt + 1,
                message: e.to_string(),
            })?;
            if !status.is_success() {
                return Err(GatewayError::Provider {
                    status: status.as_u16(),
                    body: text,
                });
            }
            let parsed: CompletionResponse = serde_json::from_str(&text).map_err(|e| {
                GatewayError::Provider {
                    status: status.as_u16(),
                    body: format!("unparseable completion ({e}): {text}"),
                }
            })?;
            return parsed
                .choices
                .into_iter()
                .next()
                .and_then(|c| c.message.content)
                .ok_or_else(|| GatewayError::Provider {
                    status: status.as_u16(),
                    body: format!("completion without choices: {text}"),
                });
        }
        Err(GatewayError::Transport {
            attempts: self.retry.max_attempts.max(1),
            message: last_error,
        })
    }
}
