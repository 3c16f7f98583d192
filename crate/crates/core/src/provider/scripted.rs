use std::collections::VecDeque;
use std::sync::Mutex;

use async_trait::async_trait;

use super::{LlmProvider, ProviderError, ProviderRequest, ProviderResponse};

/// Deterministic provider that replays canned responses in order and records
/// every request it receives.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    script: Mutex<VecDeque<Result<ProviderResponse, ProviderError>>>,
    requests: Mutex<Vec<ProviderRequest>>,
    served: Mutex<usize>,
}

/// Builds a provider replaying `script`.
pub fn scripted_provider(script: impl IntoIterator<Item = ProviderResponse>) -> ScriptedProvider {
    ScriptedProvider::new(script)
}

impl ScriptedProvider {
    pub fn new(script: impl IntoIterator<Item = ProviderResponse>) -> Self {
        Self::with_results(script.into_iter().map(Ok))
    }

    /// Script that may include provider failures.
    pub fn with_results(script: impl IntoIterator<Item = Result<ProviderResponse, ProviderError>>) -> Self {
        Self {
            script: Mutex::new(script.into_iter().collect()),
            ..Self::default()
        }
    }

    pub fn push(&self, response: ProviderResponse) {
        self.script.lock().unwrap().push_back(Ok(response));
    }

    pub fn requests(&self) -> Vec<ProviderRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn calls(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn remaining(&self) -> usize {
        self.script.lock().unwrap().len()
    }
}

#[async_trait]
impl LlmProvider for ScriptedProvider {
    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        self.requests.lock().unwrap().push(request.clone());
        let next = self.script.lock().unwrap().pop_front();
        let mut served = self.served.lock().unwrap();
        match next {
            Some(response) => {
                *served += 1;
                response
            }
            None => Err(ProviderError::ScriptExhausted(*served)),
        }
    }

    fn kind(&self) -> &'static str {
        "scripted"
    }
}
