//! Client for HTTP endpoints speaking the chat-completions schema with tool calling.

use std::fmt;
use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    ChatMessage, ChatRole, LlmProvider, ProviderError, ProviderRequest, ProviderResponse, Reachability, ToolCall,
};

#[derive(Clone)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub api_key: String,
    pub timeout: Duration,
}

impl fmt::Debug for OpenAiConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpenAiConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &"<redacted>")
            .field("timeout", &self.timeout)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct OpenAiCompatProvider {
    config: OpenAiConfig,
    http: reqwest::Client,
}

impl OpenAiCompatProvider {
    pub fn new(config: OpenAiConfig) -> Result<Self, ProviderError> {
        let http = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::Transport {
                status: None,
                message: e.to_string(),
                retriable: false,
            })?;
        Ok(Self { config, http })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), path)
    }
}

fn wire_message(m: &ChatMessage) -> Value {
    let role = match m.role {
        ChatRole::System => "system",
        ChatRole::User => "user",
        ChatRole::Assistant => "assistant",
        ChatRole::Tool => "tool",
    };
    let mut out = json!({ "role": role, "content": m.content });
    if !m.tool_calls.is_empty() {
        if m.content.is_empty() {
            out["content"] = Value::Null;
        }
        out["tool_calls"] = m
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": { "name": c.name, "arguments": c.arguments },
                })
            })
            .collect();
    }
    if let Some(id) = &m.tool_call_id {
        out["tool_call_id"] = json!(id);
    }
    out
}

/// Request body in chat-completions wire format.
pub fn render_request_body(request: &ProviderRequest) -> Value {
    let mut body = json!({
        "model": request.model,
        "temperature": request.temperature,
        "messages": request.messages.iter().map(wire_message).collect::<Vec<_>>(),
    });
    if !request.tools.is_empty() {
        body["tools"] = request
            .tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.parameters,
                    },
                })
            })
            .collect();
    }
    body
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    tool_calls: Option<Vec<WireToolCall>>,
}

#[derive(Deserialize)]
struct WireToolCall {
    id: String,
    function: WireFunction,
}

#[derive(Deserialize)]
struct WireFunction {
    name: String,
    #[serde(default)]
    arguments: Value,
}

/// Decodes a chat-completions response body.
pub fn parse_chat_completion(body: &[u8]) -> Result<ProviderResponse, ProviderError> {
    let completion: Completion = serde_json::from_slice(body).map_err(|e| ProviderError::Protocol(e.to_string()))?;
    let message = completion
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| ProviderError::Protocol("response has no choices".into()))?
        .message;

    let calls = message.tool_calls.unwrap_or_default();
    if !calls.is_empty() {
        let calls = calls
            .into_iter()
            .map(|c| {
                let arguments = match c.function.arguments {
                    Value::String(s) => s,
                    Value::Null => String::new(),
                    other => other.to_string(),
                };
                ToolCall::new(c.id, c.function.name, arguments)
            })
            .collect();
        return Ok(ProviderResponse::ToolCalls(calls));
    }
    match message.content {
        Some(text) => Ok(ProviderResponse::Text(text)),
        None => Err(ProviderError::Protocol(
            "message has neither content nor tool calls".into(),
        )),
    }
}

fn transport(e: reqwest::Error) -> ProviderError {
    ProviderError::Transport {
        status: e.status().map(|s| s.as_u16()),
        retriable: e.is_timeout() || e.is_connect(),
        message: e.without_url().to_string(),
    }
}

#[async_trait]
impl LlmProvider for OpenAiCompatProvider {
    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let response = self
            .http
            .post(self.url("chat/completions"))
            .bearer_auth(&self.config.api_key)
            .json(&render_request_body(request))
            .send()
            .await
            .map_err(transport)?;
        let status = response.status();
        let body = response.bytes().await.map_err(transport)?;
        if !status.is_success() {
            let snippet: String = String::from_utf8_lossy(&body).chars().take(300).collect();
            return Err(ProviderError::Transport {
                status: Some(status.as_u16()),
                message: snippet,
                retriable: status.as_u16() == 429 || status.is_server_error(),
            });
        }
        parse_chat_completion(&body)
    }

    async fn probe(&self) -> Reachability {
        let probe = self
            .http
            .get(self.url("models"))
            .bearer_auth(&self.config.api_key)
            .timeout(Duration::from_secs(3))
            .send()
            .await;
        match probe {
            Ok(_) => Reachability::Reachable,
            Err(_) => Reachability::Unreachable,
        }
    }

    fn kind(&self) -> &'static str {
        "chat-completions"
    }
}
