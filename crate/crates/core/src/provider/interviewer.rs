use std::collections::VecDeque;
use std::sync::Mutex;

use async_trait::async_trait;
use serde_json::json;

use super::{ChatRole, LlmProvider, ProviderError, ProviderRequest, ProviderResponse};
use crate::orchestrator::RETRIEVE_QUESTION_TOOL;
use crate::workflow::SENTINEL_TEXT;

/// Deterministic stand-in for a well-behaved interviewer model.
///
/// On every user message it calls `retrieve_question` for the current category
/// and relays the returned question verbatim. A sentinel moves it on to the
/// next category in its list, in the same turn; once the list is empty it
/// closes the interview.
#[derive(Debug)]
pub struct EchoInterviewer {
    categories: Mutex<VecDeque<String>>,
    calls: Mutex<usize>,
}

pub const CLOSING_TEXT: &str = "Thank you, that concludes the interview.";

impl EchoInterviewer {
    pub fn new<S: Into<String>>(categories: impl IntoIterator<Item = S>) -> Self {
        Self {
            categories: Mutex::new(categories.into_iter().map(Into::into).collect()),
            calls: Mutex::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        *self.calls.lock().unwrap()
    }

    fn retrieve(&self, category: &str, n: usize) -> ProviderResponse {
        ProviderResponse::tool_call(
            &format!("call_{n}"),
            RETRIEVE_QUESTION_TOOL,
            json!({ "category": category }).to_string(),
        )
    }
}

#[async_trait]
impl LlmProvider for EchoInterviewer {
    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        let n = {
            let mut calls = self.calls.lock().unwrap();
            *calls += 1;
            *calls
        };
        let last = request
            .messages
            .last()
            .ok_or_else(|| ProviderError::Protocol("empty conversation".into()))?;
        let mut categories = self.categories.lock().unwrap();
        if last.role != ChatRole::Tool {
            return Ok(match categories.front() {
                Some(c) => self.retrieve(c, n),
                None => ProviderResponse::text(CLOSING_TEXT),
            });
        }
        if last.content == SENTINEL_TEXT {
            categories.pop_front();
            return Ok(match categories.front() {
                Some(c) => self.retrieve(c, n),
                None => ProviderResponse::text(CLOSING_TEXT),
            });
        }
        Ok(ProviderResponse::text(last.content.clone()))
    }

    fn kind(&self) -> &'static str {
        "echo-interviewer"
    }
}
