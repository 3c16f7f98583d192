//! Workflow-driven interviews for assessing an organisation's
//! digital-transformation needs.
//!
//! The crate is layered bottom-up:
//!
//! - [`catalog`]: the pluggable question list.
//! - [`workflow`]: the pure interview state machine serving `retrieve_question`.
//! - [`provider`]: LLM provider trait, an HTTP chat-completions client and a scripted double.
//! - [`orchestrator`]: system prompt and the transactional tool-calling turn.
//! - [`transcription`]: speech-to-text ingestion.
//! - [`session`] / [`store`]: persisted sessions as canonical JSON documents.
//! - [`report`]: summary reports and optional 0-4 scoring.

pub mod catalog;
pub mod orchestrator;
pub mod provider;
pub mod report;
pub mod session;
pub mod store;
pub mod transcription;
pub mod workflow;

pub use catalog::{default_catalog, load_catalog, CategoryId, QuestionCatalog, QuestionId};
pub use orchestrator::{chat_turn, run_turn, TurnConfig, TurnError, TurnOutcome, UserInput};
pub use session::{ClientProfile, Message, Session, SessionStatus};
pub use store::{SessionFilter, SessionStore, StoreError};
pub use workflow::{Phase, Progress, Retrieval, WorkflowState, SENTINEL_TEXT};
