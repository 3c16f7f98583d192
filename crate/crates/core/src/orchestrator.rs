//! Drives one interview turn: prompt assembly, the tool-calling loop against an
//! [`LlmProvider`], and the bridge from `retrieve_question` calls to the
//! workflow engine.
//!
//! A turn is transactional. [`chat_turn`] never mutates its input session; it
//! returns the messages and state to commit, and [`run_turn`] commits them in a
//! single store write. Any failure leaves the persisted session untouched.

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use uuid::Uuid;

use crate::catalog::{CategoryId, QuestionCatalog};
use crate::provider::{
    ChatMessage, LlmProvider, ProviderError, ProviderRequest, ProviderResponse, ToolCall, ToolSchema,
};
use crate::session::{Modality, NewMessage, Role, Session};
use crate::store::{SessionStore, StoreError};
use crate::workflow::{Phase, WorkflowError, WorkflowState};

pub const RETRIEVE_QUESTION_TOOL: &str = "retrieve_question";
pub const PROMPT_VERSION: &str = "1";

pub const DEFAULT_MAX_TOOL_ITERATIONS: usize = 8;
pub const DEFAULT_TEMPERATURE: f32 = 0.2;

pub const PRIORITY_QUESTION: &str = "What is your top priority in the categories of corporate governance, \
customer and market management, research and development management, supply management, and production management?";

pub const LANGUAGE_NOTE: &str =
    "Note: If the client speaks other languages, then you ask the question in the corresponding language.";

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub version: &'static str,
    pub system_text: String,
    pub tool_schema: ToolSchema,
}

/// The fixed interviewer prompt and the `retrieve_question` declaration.
pub fn assemble_system_prompt() -> PromptTemplate {
    let system_text = format!(
        "You are an expert digital transformation consultant, and your role is to interview clients to deeply \
understand their business needs, challenges, and opportunities for digital transformation. Your objective is to \
gather comprehensive information about their current processes, goals, and vision for future improvements, \
focusing on areas where technology can bring the most value. You need to ask questions following the below routine.

1. Ask a question: {PRIORITY_QUESTION}

2. Ask questions returned from {RETRIEVE_QUESTION_TOOL} function in corresponding category. Until it returns \"All questions completed\".

Ask one retrieved question per message, worded as returned, and wait for the client's answer before retrieving \
the next one. When the client is unsure how to answer, help with short examples before moving on. \
When a category returns \"All questions completed\", ask which category the client wants to cover next and \
continue there; the interview ends when every category is complete.
Provide real-time updates on the progress of the interview as you ask each question, clearly indicating how many \
questions have been completed and how many remain.
Encourage the client to remain patient and engaged throughout the process.
{LANGUAGE_NOTE}"
    );
    PromptTemplate {
        version: PROMPT_VERSION,
        system_text,
        tool_schema: ToolSchema {
            name: RETRIEVE_QUESTION_TOOL.into(),
            description: "Returns the next interview question of a category, or \"All questions completed\" \
when the category has no questions left."
                .into(),
            parameters: json!({
                "type": "object",
                "properties": {
                    "category": {
                        "type": "string",
                        "description": "Category name: Corporate Governance, Customer and Market Management, \
            Research and Development Management, Supply Management or Production Management."
                    }
                },
                "required": ["category"],
                "additionalProperties": false
            }),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnConfig {
    pub model: String,
    pub temperature: f32,
    pub max_tool_iterations: usize,
}

impl Default for TurnConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tool_iterations: DEFAULT_MAX_TOOL_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserInput {
    pub text: String,
    pub modality: Modality,
    pub detected_language: Option<String>,
}

impl UserInput {
    pub fn typed(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            modality: Modality::Text,
            detected_language: None,
        }
    }

    pub fn transcribed(text: impl Into<String>, detected_language: Option<String>) -> Self {
        Self {
            text: text.into(),
            modality: Modality::AudioTranscribed,
            detected_language,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolExchange {
    pub call: ToolCall,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnOutcome {
    pub assistant_text: String,
    pub tool_trace: Vec<ToolExchange>,
    pub state: WorkflowState,
}

/// What a successful turn wants committed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnResult {
    pub outcome: TurnOutcome,
    pub messages: Vec<NewMessage>,
    pub provider_calls: usize,
}

#[derive(Debug, Error)]
pub enum TurnError {
    #[error("input is empty")]
    EmptyInput,
    #[error("session {0} is completed")]
    SessionCompleted(Uuid),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("tool-call budget of {limit} exceeded")]
    ToolBudgetExceeded { limit: usize },
    #[error("provider repeatedly called unknown tool `{0}`")]
    UnknownTool(String),
    #[error("provider repeatedly sent malformed tool arguments: {0}")]
    MalformedArguments(String),
    #[error("provider returned an empty reply")]
    EmptyReply,
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl TurnError {
    /// Whether retrying the same input may succeed.
    pub fn is_retriable(&self) -> bool {
        match self {
            TurnError::Provider(e) => e.is_retriable(),
            TurnError::ToolBudgetExceeded { .. }
            | TurnError::UnknownTool(_)
            | TurnError::MalformedArguments(_)
            | TurnError::EmptyReply => true,
            _ => false,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RetrieveArgs {
    category: String,
}

/// Extracts the `category` argument of a `retrieve_question` call.
pub fn parse_retrieve_arguments(raw: &str) -> Result<String, String> {
    let args: RetrieveArgs = serde_json::from_str(raw).map_err(|e| e.to_string())?;
    if args.category.trim().is_empty() {
        return Err("`category` must be a nonempty string".into());
    }
    Ok(args.category)
}

enum ToolOutcome {
    Result(String),
    UnknownTool(String),
    Malformed(String),
}

fn malformed_message(reason: &str, catalog: &QuestionCatalog) -> String {
    format!(
        "Error: invalid arguments for {RETRIEVE_QUESTION_TOOL}: {reason}. Call it with {{\"category\": <name>}} \
where <name> is one of: {}.",
        catalog.display_names().join(", ")
    )
}

fn execute_tool(call: &ToolCall, state: &mut WorkflowState, catalog: &QuestionCatalog) -> ToolOutcome {
    if call.name != RETRIEVE_QUESTION_TOOL {
        return ToolOutcome::UnknownTool(format!(
            "Error: unknown tool `{}`. The only available tool is {RETRIEVE_QUESTION_TOOL}.",
            call.name
        ));
    }
    let name = match parse_retrieve_arguments(&call.arguments) {
        Ok(name) => name,
        Err(reason) => return ToolOutcome::Malformed(malformed_message(&reason, catalog)),
    };
    let category = match catalog.resolve_category(&name) {
        Ok(id) => id,
        Err(e) => return ToolOutcome::Malformed(malformed_message(&e.to_string(), catalog)),
    };

    let prepared = match state.phase {
        // The client named a top priority in conversation: rank it first and
        // keep the remaining categories in catalog order.
        Phase::AwaitingPriorities => {
            let ranking: Vec<CategoryId> = std::iter::once(category.clone())
                .chain(
                    catalog
                        .categories
                        .iter()
                        .map(|c| c.id.clone())
                        .filter(|id| *id != category),
                )
                .collect();
            state.record_priorities(catalog, &ranking)
        }
        Phase::Interviewing => state.add_priority(catalog, &category),
        Phase::Completed => Ok(state.clone()),
    };
    let retrieved = prepared.and_then(|s| s.retrieve_question(catalog, &category));
    match retrieved {
        Ok((retrieval, next)) => {
            *state = next;
            ToolOutcome::Result(retrieval.render().to_owned())
        }
        Err(WorkflowError::NotPrioritized(c)) => ToolOutcome::Result(format!(
            "Error: the interview is complete; category `{}` was not part of it.",
            display_name(catalog, &c)
        )),
        Err(e) => ToolOutcome::Result(format!("Error: {e}")),
    }
}

fn display_name(catalog: &QuestionCatalog, id: &CategoryId) -> String {
    catalog
        .category(id)
        .map_or_else(|| id.to_string(), |c| c.display_name.clone())
}

/// Rebuilds the provider conversation from the persisted transcript.
///
/// Only user and assistant text is replayed: persisted tool results have no
/// matching assistant tool-call message to attach to, and the questions they
/// carried already appear in the assistant replies.
pub fn conversation_history(template: &PromptTemplate, session: &Session) -> Vec<ChatMessage> {
    std::iter::once(ChatMessage::system(template.system_text.clone()))
        .chain(session.messages.iter().filter_map(|m| match m.role {
            Role::User => Some(ChatMessage::user(m.content.clone())),
            Role::Assistant => Some(ChatMessage::assistant(m.content.clone())),
            Role::System | Role::Tool => None,
        }))
        .collect()
}

/// Runs one turn against `provider` without persisting anything.
pub async fn chat_turn(
    session: &Session,
    catalog: &QuestionCatalog,
    input: &UserInput,
    provider: &dyn LlmProvider,
    config: &TurnConfig,
) -> Result<TurnResult, TurnError> {
    let text = input.text.trim();
    if text.is_empty() {
        return Err(TurnError::EmptyInput);
    }
    if !session.is_active() {
        return Err(TurnError::SessionCompleted(session.session_id));
    }

    let template = assemble_system_prompt();
    let mut messages = conversation_history(&template, session);
    messages.push(ChatMessage::user(text));

    let mut new_messages = Vec::new();
    if !session.messages.iter().any(|m| m.role == Role::System) {
        new_messages.push(NewMessage::system(template.system_text.clone()));
    }
    new_messages.push(NewMessage {
        modality: input.modality,
        detected_language: input.detected_language.clone(),
        ..NewMessage::user(text)
    });

    let mut state = session.state.clone();
    let mut tool_trace = Vec::new();
    let mut provider_calls = 0;
    let (mut unknown_strikes, mut malformed_strikes) = (0, 0);

    loop {
        let request = ProviderRequest {
            model: config.model.clone(),
            temperature: config.temperature,
            messages: messages.clone(),
            tools: vec![template.tool_schema.clone()],
        };
        provider_calls += 1;
        let calls = match provider.complete(&request).await? {
            ProviderResponse::Text(reply) => {
                let reply = reply.trim_end();
                if reply.trim().is_empty() {
                    return Err(TurnError::EmptyReply);
                }
                new_messages.push(NewMessage::assistant(reply));
                return Ok(TurnResult {
                    outcome: TurnOutcome {
                        assistant_text: reply.to_owned(),
                        tool_trace,
                        state,
                    },
                    messages: new_messages,
                    provider_calls,
                });
            }
            ProviderResponse::ToolCalls(calls) if calls.is_empty() => {
                return Err(ProviderError::Protocol("empty tool-call list".into()).into())
            }
            ProviderResponse::ToolCalls(calls) => calls,
        };

        if tool_trace.len() + calls.len() > config.max_tool_iterations {
            return Err(TurnError::ToolBudgetExceeded {
                limit: config.max_tool_iterations,
            });
        }
        messages.push(ChatMessage::assistant_tool_calls(calls.clone()));
        for call in calls {
            let result = match execute_tool(&call, &mut state, catalog) {
                ToolOutcome::Result(text) => text,
                ToolOutcome::UnknownTool(text) => {
                    unknown_strikes += 1;
                    if unknown_strikes > 1 {
                        return Err(TurnError::UnknownTool(call.name));
                    }
                    text
                }
                ToolOutcome::Malformed(text) => {
                    malformed_strikes += 1;
                    if malformed_strikes > 1 {
                        return Err(TurnError::MalformedArguments(call.arguments));
                    }
                    text
                }
            };
            messages.push(ChatMessage::tool_result(call.id.clone(), result.clone()));
            new_messages.push(NewMessage::tool(call.id.clone(), result.clone()));
            tool_trace.push(ToolExchange { call, result });
        }
    }
}

/// Runs a turn on a stored session and commits it.
///
/// Holds the session lease for the whole turn; a second concurrent turn on the
/// same session fails with [`StoreError::Busy`].
pub async fn run_turn(
    store: &SessionStore,
    session_id: Uuid,
    input: &UserInput,
    provider: &dyn LlmProvider,
    config: &TurnConfig,
) -> Result<(Session, TurnOutcome), TurnError> {
    if input.text.trim().is_empty() {
        return Err(TurnError::EmptyInput);
    }
    let _lease = store.lease(session_id)?;
    let session = store.resume(session_id)?;
    let result = chat_turn(&session, store.catalog(), input, provider, config).await?;
    let committed = store.commit_turn(
        session_id,
        session.last_message_id(),
        result.messages,
        Some(result.outcome.state.clone()),
    )?;
    Ok((committed, result.outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::default_catalog;
    use crate::provider::scripted_provider;
    use crate::session::ClientProfile;

    fn session() -> Session {
        Session::new(
            ClientProfile {
                company_name: "Acme".into(),
                client_name: "Ada".into(),
                industry_type: "".into(),
                industry_size: "".into(),
                job_title: "CEO".into(),
            },
            &default_catalog(),
        )
        .unwrap()
    }

    #[test]
    fn template_contents() {
        let t = assemble_system_prompt();
        assert!(t.system_text.contains("retrieve_question"));
        assert!(t.system_text.contains("What is your top priority"));
        assert!(t.system_text.contains(LANGUAGE_NOTE));
        assert!(t
            .system_text
            .contains("how many questions have been completed and how many remain"));
        let params = &t.tool_schema.parameters;
        assert_eq!(params["required"], json!(["category"]));
        assert_eq!(params["properties"].as_object().unwrap().len(), 1);
        assert_eq!(params["properties"]["category"]["type"], "string");
        assert_eq!(assemble_system_prompt(), t);
    }

    #[test]
    fn argument_parsing() {
        assert_eq!(parse_retrieve_arguments(r#"{"category":"rnd"}"#).unwrap(), "rnd");
        assert!(parse_retrieve_arguments("{category:").is_err());
        assert!(parse_retrieve_arguments(r#"{"category":3}"#).is_err());
        assert!(parse_retrieve_arguments(r#"{"category":" "}"#).is_err());
        assert!(parse_retrieve_arguments(r#"{"category":"rnd","x":1}"#).is_err());
    }

    #[tokio::test]
    async fn plain_text_turn_has_no_tool_trace() {
        let s = session();
        let provider = scripted_provider([ProviderResponse::text("What is your top priority?")]);
        let r = chat_turn(
            &s,
            &default_catalog(),
            &UserInput::typed("hello"),
            &provider,
            &TurnConfig::default(),
        )
        .await
        .unwrap();
        assert!(r.outcome.tool_trace.is_empty());
        assert_eq!(r.outcome.state, s.state);
        assert_eq!(r.provider_calls, 1);
        let roles: Vec<_> = r.messages.iter().map(|m| m.role).collect();
        assert_eq!(roles, [Role::System, Role::User, Role::Assistant]);
    }

    #[tokio::test]
    async fn first_retrieval_records_priority() {
        let s = session();
        let provider = scripted_provider([
            ProviderResponse::tool_call("c1", RETRIEVE_QUESTION_TOOL, r#"{"category":"R&D"}"#),
            ProviderResponse::text("Question 1 of 10: Is there a P&D or R&D department?"),
        ]);
        let r = chat_turn(
            &s,
            &default_catalog(),
            &UserInput::typed("R&D first"),
            &provider,
            &TurnConfig::default(),
        )
        .await
        .unwrap();
        assert_eq!(r.outcome.tool_trace[0].result, "Is there a P&D or R&D department?");
        assert_eq!(r.outcome.state.phase, Phase::Interviewing);
        let ranking: Vec<&str> = r.outcome.state.priority_order.iter().map(|c| c.as_str()).collect();
        assert_eq!(
            ranking,
            ["rnd", "corporate_governance", "customer_market", "supply", "production"]
        );
        let tool = r.messages.iter().find(|m| m.role == Role::Tool).unwrap();
        assert_eq!(tool.tool_call_id.as_deref(), Some("c1"));
    }

    #[tokio::test]
    async fn empty_input_is_rejected_before_calling_provider() {
        let provider = scripted_provider([ProviderResponse::text("x")]);
        let err = chat_turn(
            &session(),
            &default_catalog(),
            &UserInput::typed("  \n"),
            &provider,
            &TurnConfig::default(),
        )
        .await
        .unwrap_err();
        assert!(matches!(err, TurnError::EmptyInput));
        assert_eq!(provider.calls(), 0);
    }

    #[tokio::test]
    async fn malformed_then_valid_recovers() {
        let provider = scripted_provider([
            ProviderResponse::tool_call("c1", RETRIEVE_QUESTION_TOOL, r#"{"category":"logistics"}"#),
            ProviderResponse::tool_call("c2", RETRIEVE_QUESTION_TOOL, r#"{"category":"Supply Management"}"#),
            ProviderResponse::text("ok"),
        ]);
        let r = chat_turn(
            &session(),
            &default_catalog(),
            &UserInput::typed("supply"),
            &provider,
            &TurnConfig::default(),
        )
        .await
        .unwrap();
        assert!(r.outcome.tool_trace[0].result.contains("Production Management"));
        assert_eq!(
            r.outcome.tool_trace[1].result,
            "Production Planning: How is the planning horizon determined?"
        );
    }

    #[tokio::test]
    async fn provider_failure_surfaces_status() {
        let provider = crate::provider::ScriptedProvider::with_results([Err(ProviderError::Transport {
            status: Some(503),
            message: "down".into(),
            retriable: true,
        })]);
        let err = chat_turn(
            &session(),
            &default_catalog(),
            &UserInput::typed("hi"),
            &provider,
            &TurnConfig::default(),
        )
        .await
        .unwrap_err();
        assert!(err.is_retriable());
        assert!(matches!(err, TurnError::Provider(ref e) if e.status() == Some(503)));
    }
}
