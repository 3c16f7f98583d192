#![allow(dead_code)]

use std::sync::Arc;

use async_trait::async_trait;
use clap::Parser;
use dtinterview_core::provider::{LlmProvider, ProviderError, ProviderRequest, ProviderResponse};
use dtinterview_core::transcription::SttProvider;
use dtinterview_server::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tokio::sync::{Notify, Semaphore};

pub const TOKEN: &str = "test-token-7f3a9c";
pub const LLM_KEY: &str = "sk-live-do-not-leak-4242";

#[derive(Parser)]
struct Cli {
    #[command(flatten)]
    config: ServiceConfig,
}

/// Parses service flags the way the binary does.
pub fn parse_config(args: &[&str]) -> Result<ServiceConfig, clap::Error> {
    Cli::try_parse_from(std::iter::once("dtinterview").chain(args.iter().copied())).map(|c| c.config)
}

pub struct Service {
    pub base: String,
    pub state: AppState,
    pub http: reqwest::Client,
    pub dir: tempfile::TempDir,
}

pub async fn spawn(llm: Arc<dyn LlmProvider>, stt: Arc<dyn SttProvider>) -> Service {
    spawn_with(llm, stt, |_| {}).await
}

pub async fn spawn_with(
    llm: Arc<dyn LlmProvider>,
    stt: Arc<dyn SttProvider>,
    tweak: impl FnOnce(&mut AppState),
) -> Service {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().to_str().unwrap().to_owned();
    let config = parse_config(&["--auth-token", TOKEN, "--data-dir", &data_dir, "--llm-api-key", LLM_KEY]).unwrap();
    let mut state = config.build_state_with(llm, stt).unwrap();
    tweak(&mut state);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(state.clone());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Service {
        base: format!("http://{addr}"),
        state,
        http: reqwest::Client::new(),
        dir,
    }
}

impl Service {
    pub fn get(&self, path: &str) -> reqwest::RequestBuilder {
        self.http.get(format!("{}{path}", self.base)).bearer_auth(TOKEN)
    }

    pub fn post(&self, path: &str) -> reqwest::RequestBuilder {
        self.http.post(format!("{}{path}", self.base)).bearer_auth(TOKEN)
    }

    pub async fn create_session(&self) -> String {
        let response = self.post("/sessions").json(&profile()).send().await.unwrap();
        assert_eq!(response.status(), 201);
        let body: Value = response.json().await.unwrap();
        body["session_id"].as_str().unwrap().to_owned()
    }

    pub async fn set_priorities(&self, id: &str, categories: &[&str]) -> reqwest::Response {
        self.post(&format!("/sessions/{id}/priorities"))
            .json(&json!({ "categories": categories }))
            .send()
            .await
            .unwrap()
    }

    pub async fn turn(&self, id: &str, text: &str) -> reqwest::Response {
        self.post(&format!("/sessions/{id}/turns"))
            .json(&json!({ "text": text }))
            .send()
            .await
            .unwrap()
    }

    pub fn session_file(&self, id: &str) -> Vec<u8> {
        std::fs::read(self.dir.path().join("sessions").join(format!("{id}.json"))).unwrap()
    }
}

pub fn profile() -> Value {
    json!({
        "company_name": "Dudullu Fan Clutch Ltd",
        "client_name": "Ayse Demir",
        "industry_type": "automotive manufacturing",
        "industry_size": "50-249 employees",
        "job_title": "Production Director"
    })
}

pub async fn error_code(response: reqwest::Response) -> String {
    let body: Value = response.json().await.unwrap();
    body["error"]["code"].as_str().unwrap_or_default().to_owned()
}

/// Provider that parks every call until released, so a turn can be held in flight.
pub struct GatedProvider<P> {
    pub entered: Notify,
    pub gate: Semaphore,
    pub inner: P,
}

impl<P> GatedProvider<P> {
    pub fn open(&self) {
        self.gate.add_permits(1_000);
    }

    pub fn new(inner: P) -> Self {
        Self {
            entered: Notify::new(),
            gate: Semaphore::new(0),
            inner,
        }
    }
}

#[async_trait]
impl<P: LlmProvider> LlmProvider for GatedProvider<P> {
    async fn complete(&self, request: &ProviderRequest) -> Result<ProviderResponse, ProviderError> {
        self.entered.notify_one();
        self.gate.acquire().await.unwrap().forget();
        self.inner.complete(request).await
    }

    fn kind(&self) -> &'static str {
        "gated"
    }
}
