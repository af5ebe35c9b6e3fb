use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::UnifierError;

pub const ENV_ENDPOINT: &str = "HC_LLM_ENDPOINT";
pub const ENV_KEY: &str = "HC_LLM_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
}

#[derive(Debug, Clone)]
pub enum Transport {
    Live { endpoint: String, model: String, api_key: Option<String>, timeout: Duration },
    /// Recorded responses, consumed in order.
    Replay { path: PathBuf, responses: Vec<String>, next: usize },
    Mock { response: String },
}

/// Chat-completion gateway. Live mode allows one request in flight per
/// client; replay and mock never touch the network.
#[derive(Debug, Clone)]
pub struct LlmClient {
    transport: Transport,
}

impl LlmClient {
    pub fn new(transport: Transport) -> Self {
        LlmClient { transport }
    }

    /// Live client configured from `HC_LLM_ENDPOINT` and `HC_LLM_KEY`.
    pub fn from_env(model: &str, timeout: Duration) -> Result<Self, UnifierError> {
        let endpoint = std::env::var(ENV_ENDPOINT)
            .map_err(|_| UnifierError::Transport(format!("{ENV_ENDPOINT} is not set")))?;
        let api_key = std::env::var(ENV_KEY).ok().filter(|k| !k.is_empty());
        Ok(Self::new(Transport::Live { endpoint, model: model.to_string(), api_key, timeout }))
    }

    /// Replay file: a JSON array of response strings.
    pub fn replay(path: &Path) -> Result<Self, UnifierError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UnifierError::Transport(format!("cannot read replay file {}: {e}", path.display())))?;
        let responses: Vec<String> = serde_json::from_str(&text).map_err(|e| {
            UnifierError::Transport(format!("replay file {} is not a JSON array of strings: {e}", path.display()))
        })?;
        Ok(Self::new(Transport::Replay { path: path.to_path_buf(), responses, next: 0 }))
    }

    pub fn mock(response: impl Into<String>) -> Self {
        Self::new(Transport::Mock { response: response.into() })
    }

    pub fn transport(&self) -> &Transport {
        &self.transport
    }

    pub fn complete(&mut self, messages: &[ChatMessage]) -> Result<String, UnifierError> {
        match &mut self.transport {
            Transport::Mock { response } => Ok(response.clone()),
            Transport::Replay { path, responses, next } => {
                let r = responses.get(*next).cloned().ok_or_else(|| {
                    UnifierError::Transport(format!(
                        "replay file {} exhausted after {} responses",
                        path.display(),
                        responses.len()
                    ))
                })?;
                *next += 1;
                Ok(r)
            }
            Transport::Live { endpoint, model, api_key, timeout } => {
                let body = json!({ "model": model, "messages": messages });
                let reply = crate::http::post_json(endpoint, api_key.as_deref(), &body, *timeout)
                    .map_err(UnifierError::Transport)?;
                response_text(&reply)
                    .ok_or_else(|| UnifierError::Transport(format!("no message content in response: {reply}")))
            }
        }
    }
}

/// Pulls the assistant text out of the common chat response shapes.
fn response_text(v: &Value) -> Option<String> {
    let pointers = ["/choices/0/message/content", "/content/0/text", "/message/content", "/content"];
    pointers.iter().find_map(|p| v.pointer(p).and_then(Value::as_str)).map(str::to_string)
}
