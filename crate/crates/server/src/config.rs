use std::fmt;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::Args;
use dtinterview_core::catalog::{default_catalog, load_catalog_file, CatalogError, QuestionCatalog};
use dtinterview_core::orchestrator::{TurnConfig, DEFAULT_MAX_TOOL_ITERATIONS, DEFAULT_TEMPERATURE};
use dtinterview_core::provider::{LlmProvider, OpenAiCompatProvider, OpenAiConfig, ProviderError};
use dtinterview_core::report::Rubric;
use dtinterview_core::store::{SessionStore, StoreError};
use dtinterview_core::transcription::{HttpTranscriber, SttError, SttProvider, DEFAULT_AUDIO_CAP_BYTES};
use thiserror::Error;

use crate::api::AppState;
use crate::auth::RateLimiter;

/// A credential that never prints.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.trim().is_empty()
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<redacted>")
    }
}

impl std::str::FromStr for Secret {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Self::new(s))
    }
}

#[derive(Debug, Clone, Args)]
pub struct ServiceConfig {
    #[arg(long, env = "DT_BIND", default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[arg(long, env = "DT_AUTH_TOKEN", hide_env_values = true)]
    pub auth_token: Option<Secret>,
    /// Run without an auth token (local development only).
    #[arg(long)]
    pub insecure_dev: bool,
    #[arg(long, env = "DT_DATA_DIR", default_value = "./data")]
    pub data_dir: PathBuf,
    /// Catalog document; the shipped catalog when omitted.
    #[arg(long, env = "DT_CATALOG")]
    pub catalog: Option<PathBuf>,
    /// Scoring rubric document; the shipped placeholder rubric when omitted.
    #[arg(long, env = "DT_RUBRIC")]
    pub rubric: Option<PathBuf>,

    #[arg(long, env = "LLM_BASE_URL", default_value = "https://api.openai.com/v1")]
    pub llm_base_url: String,
    #[arg(long, env = "LLM_API_KEY", hide_env_values = true)]
    pub llm_api_key: Option<Secret>,
    #[arg(long, env = "LLM_MODEL", default_value = "gpt-4o")]
    pub llm_model: String,
    #[arg(long, env = "LLM_TEMPERATURE", default_value_t = DEFAULT_TEMPERATURE)]
    pub llm_temperature: f32,
    #[arg(long, env = "LLM_MAX_TOOL_ITERATIONS", default_value_t = DEFAULT_MAX_TOOL_ITERATIONS)]
    pub max_tool_iterations: usize,

    #[arg(long, env = "STT_BASE_URL", default_value = "https://api.openai.com/v1")]
    pub stt_base_url: String,
    #[arg(long, env = "STT_API_KEY", hide_env_values = true)]
    pub stt_api_key: Option<Secret>,
    #[arg(long, env = "STT_MODEL", default_value = "whisper-1")]
    pub stt_model: String,

    #[arg(long, env = "DT_AUDIO_CAP_BYTES", default_value_t = DEFAULT_AUDIO_CAP_BYTES)]
    pub audio_cap_bytes: usize,
    /// Keep uploaded audio clips next to the session (off by default).
    #[arg(long, env = "DT_RETAIN_AUDIO")]
    pub retain_audio: bool,
    /// Turns per minute allowed per bearer token.
    #[arg(long, env = "DT_RATE_LIMIT", default_value_t = 60)]
    pub turns_per_minute: u32,
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("DT_AUTH_TOKEN is required unless --insecure-dev is set")]
    MissingAuthToken,
    #[error("LLM_API_KEY is required")]
    MissingLlmKey,
    #[error("invalid catalog: {0}")]
    Catalog(#[from] CatalogError),
    #[error("cannot read rubric {path}: {message}")]
    Rubric { path: String, message: String },
    #[error("cannot open data directory: {0}")]
    Store(#[from] StoreError),
    #[error("cannot build LLM client: {0}")]
    Llm(#[from] ProviderError),
    #[error("cannot build transcription client: {0}")]
    Stt(#[from] SttError),
    #[error("cannot bind {addr}: {message}")]
    Bind { addr: SocketAddr, message: String },
}

impl ServiceConfig {
    /// Token required on requests, or `None` in insecure dev mode.
    pub fn required_token(&self) -> Result<Option<Secret>, StartupError> {
        match &self.auth_token {
            Some(t) if !t.is_empty() => Ok(Some(t.clone())),
            _ if self.insecure_dev => Ok(None),
            _ => Err(StartupError::MissingAuthToken),
        }
    }

    pub fn load_catalog(&self) -> Result<QuestionCatalog, StartupError> {
        Ok(match &self.catalog {
            Some(path) => load_catalog_file(path)?,
            None => default_catalog(),
        })
    }

    pub fn turn_config(&self) -> TurnConfig {
        TurnConfig {
            model: self.llm_model.clone(),
            temperature: self.llm_temperature,
            max_tool_iterations: self.max_tool_iterations,
        }
    }

    fn load_rubric(&self) -> Result<Rubric, StartupError> {
        match &self.rubric {
            Some(path) => Rubric::load(path).map_err(|e| StartupError::Rubric {
                path: path.display().to_string(),
                message: e.to_string(),
            }),
            None => Ok(Rubric::default()),
        }
    }

    /// Validates the configuration and assembles service state with the given providers.
    pub fn build_state_with(
        &self,
        llm: Arc<dyn LlmProvider>,
        stt: Arc<dyn SttProvider>,
    ) -> Result<AppState, StartupError> {
        let auth_token = self.required_token()?;
        let catalog = Arc::new(self.load_catalog()?);
        let store = Arc::new(SessionStore::open(&self.data_dir, Arc::clone(&catalog))?);
        Ok(AppState {
            store,
            catalog,
            llm,
            stt,
            turn_config: self.turn_config(),
            rubric: Arc::new(self.load_rubric()?),
            auth_token,
            audio_cap_bytes: self.audio_cap_bytes,
            retain_audio: self.retain_audio,
            rate_limiter: Arc::new(RateLimiter::per_minute(self.turns_per_minute)),
        })
    }

    /// Builds state backed by the configured HTTP providers.
    pub fn build_state(&self) -> Result<AppState, StartupError> {
        self.required_token()?;
        let llm_key = self
            .llm_api_key
            .as_ref()
            .filter(|k| !k.is_empty())
            .ok_or(StartupError::MissingLlmKey)?;
        let llm = OpenAiCompatProvider::new(OpenAiConfig {
            base_url: self.llm_base_url.clone(),
            api_key: llm_key.expose().to_owned(),
            timeout: Duration::from_secs(120),
        })?;
        // Hosted STT usually shares the LLM credential.
        let stt_key = self.stt_api_key.as_ref().unwrap_or(llm_key);
        let stt = HttpTranscriber::new(self.stt_base_url.clone(), stt_key.expose(), self.stt_model.clone())?;
        self.build_state_with(Arc::new(llm), Arc::new(stt))
    }
}
