//! Summary reports and optional 0-4 capability scores.
//!
//! Provider output is never trusted: it must parse into the expected JSON
//! shape, gets one repair re-prompt if it does not, and is rejected after that.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::catalog::{CategoryId, QuestionCatalog, QuestionId};
use crate::provider::{ChatMessage, LlmProvider, ProviderError, ProviderRequest, ProviderResponse};
use crate::session::{Role, Session, Timestamp};
use crate::store::{encode_canonical, SessionStore, StoreError};
use crate::workflow::SENTINEL_TEXT;

pub const DEFAULT_RUBRIC: &str = include_str!("../data/rubric.default.md");

pub const MAX_SCORE: u8 = 4;

const REPORT_INSTRUCTION: &str = "You are an expert digital transformation consultant. You will receive the full \
transcript of an interview with a client. Write a summary report of the client's digital transformation needs. \
Respond with a single JSON object and nothing else, with exactly these keys: \
\"current_practices\" (list of strings: how the organisation works today), \
\"challenges\" (list of strings: problems and gaps the client described), \
\"strategic_goals\" (list of strings: objectives and desired improvements). \
Each string is one concise finding grounded in the transcript. Use an empty list when the transcript has nothing for a section.";

const SCORING_INSTRUCTION: &str = "You assess the digital capability level shown by a client's answer to one \
interview question, using the rubric below. Respond with a single JSON object and nothing else: \
{\"score\": <integer 0-4>, \"justification\": <one or two sentences citing the answer>}.\n\nRubric:\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreEntry {
    pub score: u8,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub session_id: Uuid,
    pub generated_at: Timestamp,
    pub current_practices: Vec<String>,
    pub challenges: Vec<String>,
    pub strategic_goals: Vec<String>,
    pub scores: Option<BTreeMap<QuestionId, ScoreEntry>>,
    pub model: String,
}

impl Report {
    /// Schema check applied before a report is accepted or persisted.
    pub fn validate(&self) -> Result<(), String> {
        for (section, findings) in self.sections() {
            if let Some(i) = findings.iter().position(|f| f.trim().is_empty()) {
                return Err(format!("{section}[{i}] is empty"));
            }
        }
        if let Some(scores) = &self.scores {
            for (id, entry) in scores {
                entry.validate().map_err(|e| format!("scores.{id}: {e}"))?;
            }
        }
        if self.model.trim().is_empty() {
            return Err("model must be nonempty".into());
        }
        Ok(())
    }

    fn sections(&self) -> [(&'static str, &Vec<String>); 3] {
        [
            ("current_practices", &self.current_practices),
            ("challenges", &self.challenges),
            ("strategic_goals", &self.strategic_goals),
        ]
    }
}

impl ScoreEntry {
    pub fn validate(&self) -> Result<(), String> {
        if self.score > MAX_SCORE {
            return Err(format!("score {} is outside 0-{MAX_SCORE}", self.score));
        }
        if self.justification.trim().is_empty() {
            return Err("justification must be nonempty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rubric {
    pub text: String,
}

impl Default for Rubric {
    fn default() -> Self {
        Self {
            text: DEFAULT_RUBRIC.to_owned(),
        }
    }
}

impl Rubric {
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self {
            text: std::fs::read_to_string(path)?,
        })
    }
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("session has no answered questions yet")]
    NothingAnswered,
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("provider output failed validation after a repair attempt: {0}")]
    InvalidOutput(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnsweredQuestion {
    pub id: QuestionId,
    pub text: String,
    pub answers: Vec<String>,
}

/// Questions that received at least one user message between their retrieval
/// and the next retrieval (or the end of the transcript), in retrieval order.
///
/// Retrievals are recovered by replaying tool results against the catalog: a
/// tool result is a retrieval of category `c` when it equals the next unserved
/// question of `c`. Error results match nothing and are skipped.
pub fn answered_questions(session: &Session, catalog: &QuestionCatalog) -> Vec<AnsweredQuestion> {
    let mut served: HashMap<&CategoryId, usize> = HashMap::new();
    let mut asked: Vec<AnsweredQuestion> = Vec::new();
    let mut open: Option<usize> = None;

    for message in &session.messages {
        match message.role {
            Role::Tool if message.content == SENTINEL_TEXT => open = None,
            Role::Tool => {
                let hit = catalog.categories.iter().find_map(|c| {
                    let next = *served.get(&c.id).unwrap_or(&0);
                    c.questions
                        .get(next)
                        .filter(|q| q.text == message.content)
                        .map(|q| (&c.id, q))
                });
                if let Some((category, question)) = hit {
                    *served.entry(category).or_insert(0) += 1;
                    asked.push(AnsweredQuestion {
                        id: question.id.clone(),
                        text: question.text.clone(),
                        answers: Vec::new(),
                    });
                    open = Some(asked.len() - 1);
                }
            }
            Role::User => {
                if let Some(i) = open {
                    asked[i].answers.push(message.content.clone());
                }
            }
            Role::System | Role::Assistant => {}
        }
    }
    asked.retain(|q| !q.answers.is_empty());
    asked
}

/// Transcript with explicit speaker labels, as handed to the report prompt.
pub fn render_labelled_transcript(session: &Session) -> String {
    let p = &session.profile;
    let mut out = format!(
        "Company: {}\nInterviewee: {}\nJob title: {}\nIndustry: {} ({})\n\n",
        p.company_name, p.client_name, p.job_title, p.industry_type, p.industry_size
    );
    for m in &session.messages {
        let label = match m.role {
            Role::User => "Client",
            Role::Assistant => "Consultant",
            Role::Tool => "Retrieved question",
            Role::System => continue,
        };
        out.push_str(&format!("[{label}] {}\n", m.content));
    }
    out
}

fn strip_code_fence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(inner) = t.strip_prefix("```") else {
        return t;
    };
    let inner = inner.strip_suffix("```").unwrap_or(inner);
    // drop an info string such as `json`
    match inner.split_once('\n') {
        Some((first, rest)) if !first.trim_start().starts_with('{') => rest.trim(),
        _ => inner.trim(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSections {
    pub current_practices: Vec<String>,
    pub challenges: Vec<String>,
    pub strategic_goals: Vec<String>,
}

/// Parses the report-extraction output of a provider.
pub fn parse_report_output(raw: &str) -> Result<ReportSections, String> {
    let mut sections: ReportSections =
        serde_json::from_str(strip_code_fence(raw)).map_err(|e| format!("not a valid report object: {e}"))?;
    for (name, list) in [
        ("current_practices", &mut sections.current_practices),
        ("challenges", &mut sections.challenges),
        ("strategic_goals", &mut sections.strategic_goals),
    ] {
        for (i, finding) in list.iter_mut().enumerate() {
            *finding = finding.trim().to_owned();
            if finding.is_empty() {
                return Err(format!("{name}[{i}] is empty"));
            }
        }
    }
    Ok(sections)
}

/// Parses one scoring output.
pub fn parse_score_output(raw: &str) -> Result<ScoreEntry, String> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Wire {
        score: i64,
        justification: String,
    }
    let wire: Wire =
        serde_json::from_str(strip_code_fence(raw)).map_err(|e| format!("not a valid score object: {e}"))?;
    let score = u8::try_from(wire.score)
        .ok()
        .filter(|s| *s <= MAX_SCORE)
        .ok_or_else(|| format!("score {} is outside 0-{MAX_SCORE}", wire.score))?;
    let entry = ScoreEntry {
        score,
        justification: wire.justification.trim().to_owned(),
    };
    entry.validate()?;
    Ok(entry)
}

/// Asks for structured output, re-prompting once with the validation error.
async fn structured_request<T>(
    provider: &dyn LlmProvider,
    model: &str,
    mut messages: Vec<ChatMessage>,
    parse: impl Fn(&str) -> Result<T, String>,
) -> Result<T, ReportError> {
    let mut last_error = String::new();
    for attempt in 0..2 {
        let request = ProviderRequest {
            model: model.to_owned(),
            temperature: 0.0,
            messages: messages.clone(),
            tools: Vec::new(),
        };
        let raw = match provider.complete(&request).await? {
            ProviderResponse::Text(text) => text,
            ProviderResponse::ToolCalls(_) => String::new(),
        };
        match parse(&raw) {
            Ok(value) => return Ok(value),
            Err(e) => last_error = e,
        }
        if attempt == 0 {
            messages.push(ChatMessage::assistant(raw));
            messages.push(ChatMessage::user(format!(
                "Your previous reply could not be used: {last_error}. Reply again with only the JSON object in the requested format."
            )));
        }
    }
    Err(ReportError::InvalidOutput(last_error))
}

/// Summarizes the session into the three report sections.
pub async fn generate_report(
    session: &Session,
    catalog: &QuestionCatalog,
    provider: &dyn LlmProvider,
    model: &str,
) -> Result<Report, ReportError> {
    if answered_questions(session, catalog).is_empty() {
        return Err(ReportError::NothingAnswered);
    }
    let messages = vec![
        ChatMessage::system(REPORT_INSTRUCTION),
        ChatMessage::user(render_labelled_transcript(session)),
    ];
    let sections = structured_request(provider, model, messages, parse_report_output).await?;
    let report = Report {
        session_id: session.session_id,
        generated_at: Timestamp::now(),
        current_practices: sections.current_practices,
        challenges: sections.challenges,
        strategic_goals: sections.strategic_goals,
        scores: None,
        model: model.to_owned(),
    };
    report.validate().map_err(ReportError::InvalidOutput)?;
    Ok(report)
}

/// Scores every answered question on the 0-4 scale.
pub async fn score_responses(
    session: &Session,
    catalog: &QuestionCatalog,
    provider: &dyn LlmProvider,
    model: &str,
    rubric: &Rubric,
) -> Result<BTreeMap<QuestionId, ScoreEntry>, ReportError> {
    let answered = answered_questions(session, catalog);
    if answered.is_empty() {
        return Err(ReportError::NothingAnswered);
    }
    let mut scores = BTreeMap::new();
    for question in answered {
        let messages = vec![
            ChatMessage::system(format!("{SCORING_INSTRUCTION}{}", rubric.text)),
            ChatMessage::user(format!(
                "Question: {}\nClient answer:\n{}",
                question.text,
                question.answers.join("\n")
            )),
        ];
        let entry = structured_request(provider, model, messages, parse_score_output).await?;
        scores.insert(question.id, entry);
    }
    Ok(scores)
}

/// Generates a report for a stored session, optionally scored, and persists it.
pub async fn create_report(
    store: &SessionStore,
    session_id: Uuid,
    provider: &dyn LlmProvider,
    model: &str,
    rubric: Option<&Rubric>,
) -> Result<Report, ReportError> {
    let session = store.load(session_id)?;
    let mut report = generate_report(&session, store.catalog(), provider, model).await?;
    if let Some(rubric) = rubric {
        report.scores = Some(score_responses(&session, store.catalog(), provider, model, rubric).await?);
    }
    store.save_report(&report)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
}

fn push_section(out: &mut String, heading: &str, findings: &[String]) {
    out.push_str(&format!("\n## {heading}\n\n"));
    if findings.is_empty() {
        out.push_str("_none identified_\n");
    }
    for f in findings {
        out.push_str(&format!("- {f}\n"));
    }
}

pub fn render_report(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => String::from_utf8(encode_canonical(report)).expect("JSON is UTF-8"),
        ReportFormat::Markdown => {
            let mut out = format!(
                "# Digital Transformation Needs Report\n\nSession: {}  \nGenerated: {}  \nModel: {}\n",
                report.session_id, report.generated_at, report.model
            );
            push_section(&mut out, "Current Practices", &report.current_practices);
            push_section(&mut out, "Challenges", &report.challenges);
            push_section(&mut out, "Strategic Goals", &report.strategic_goals);
            if let Some(scores) = &report.scores {
                out.push_str("\n## Capability Scores\n\n| Question | Score | Justification |\n|---|---|---|\n");
                for (id, entry) in scores {
                    let justification = entry.justification.replace('|', "\\|").replace('\n', " ");
                    out.push_str(&format!("| {id} | {} | {justification} |\n", entry.score));
                }
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::default_catalog;
    use crate::provider::scripted_provider;
    use crate::session::{ClientProfile, NewMessage};

    fn session_with(messages: Vec<NewMessage>) -> Session {
        let mut s = Session::new(
            ClientProfile {
                company_name: "Acme".into(),
                client_name: "Ada".into(),
                industry_type: "t".into(),
                industry_size: "s".into(),
                job_title: "CEO".into(),
            },
            &default_catalog(),
        )
        .unwrap();
        s.apply(messages, None, Timestamp::now());
        s
    }

    fn answered_session() -> Session {
        session_with(vec![
            NewMessage::user("governance"),
            NewMessage::tool("c1", "How are management decisions made?"),
            NewMessage::assistant("How are management decisions made?"),
            NewMessage::user("By the owner."),
        ])
    }

    const VALID: &str =
        r#"{"current_practices":["Owner decides"],"challenges":["No plan"],"strategic_goals":["Write a strategy"]}"#;

    #[test]
    fn answered_detection_follows_retrievals() {
        let s = session_with(vec![
            NewMessage::user("let's start with governance"),
            NewMessage::tool("c1", "How are management decisions made?"),
            NewMessage::assistant("Q1"),
            NewMessage::user("owner decides"),
            NewMessage::tool("c2", "Is there a written strategic plan?"),
            NewMessage::tool("c3", "Is there a strategy for digitalisation?"),
            NewMessage::assistant("Q3"),
            NewMessage::user("no"),
            NewMessage::tool("c4", "Error: unknown tool `x`."),
            NewMessage::user("still no"),
        ]);
        let answered = answered_questions(&s, &default_catalog());
        let ids: Vec<_> = answered.iter().map(|q| q.id.as_str()).collect();
        assert_eq!(ids, ["corporate_governance.1", "corporate_governance.3"]);
        assert_eq!(answered[1].answers, ["no", "still no"]);
    }

    #[tokio::test]
    async fn valid_report_passes_through() {
        let provider = scripted_provider([ProviderResponse::text(format!("```json\n{VALID}\n```"))]);
        let r = generate_report(&answered_session(), &default_catalog(), &provider, "m")
            .await
            .unwrap();
        assert_eq!(r.current_practices, ["Owner decides"]);
        assert_eq!(r.challenges, ["No plan"]);
        assert_eq!(r.strategic_goals, ["Write a strategy"]);
        let sent = &provider.requests()[0].messages[1].content;
        assert!(sent.contains("[Client] By the owner."));
        assert!(sent.contains("[Consultant] How are management decisions made?"));
    }

    #[tokio::test]
    async fn prose_twice_is_rejected_after_repair() {
        let provider = scripted_provider([
            ProviderResponse::text("Here is the summary: all good."),
            ProviderResponse::text("Sorry, again prose."),
        ]);
        let err = generate_report(&answered_session(), &default_catalog(), &provider, "m")
            .await
            .unwrap_err();
        assert!(matches!(err, ReportError::InvalidOutput(_)));
        assert_eq!(provider.calls(), 2);
        let repair = &provider.requests()[1].messages;
        assert_eq!(repair.len(), 4);
        assert!(repair[3].content.contains("could not be used"));
    }

    #[tokio::test]
    async fn repair_succeeds_on_second_try() {
        let provider = scripted_provider([ProviderResponse::text("nope"), ProviderResponse::text(VALID)]);
        assert!(generate_report(&answered_session(), &default_catalog(), &provider, "m")
            .await
            .is_ok());
    }

    #[tokio::test]
    async fn nothing_answered_is_a_precondition_error() {
        let provider = scripted_provider([ProviderResponse::text(VALID)]);
        let s = session_with(vec![NewMessage::user("hello")]);
        let err = generate_report(&s, &default_catalog(), &provider, "m")
            .await
            .unwrap_err();
        assert!(matches!(err, ReportError::NothingAnswered));
        assert_eq!(provider.calls(), 0);
    }

    #[tokio::test]
    async fn scores_validated_to_range() {
        let ok = scripted_provider([ProviderResponse::text(r#"{"score":3,"justification":"Owner-driven."}"#)]);
        let scores = score_responses(&answered_session(), &default_catalog(), &ok, "m", &Rubric::default())
            .await
            .unwrap();
        assert_eq!(scores[&QuestionId::new("corporate_governance.1")].score, 3);

        let bad = scripted_provider([
            ProviderResponse::text(r#"{"score":5,"justification":"x"}"#),
            ProviderResponse::text(r#"{"score":5,"justification":"x"}"#),
        ]);
        let err = score_responses(&answered_session(), &default_catalog(), &bad, "m", &Rubric::default())
            .await
            .unwrap_err();
        assert!(matches!(err, ReportError::InvalidOutput(ref m) if m.contains("outside")));
    }

    #[test]
    fn score_parsing_edges() {
        assert!(parse_score_output(r#"{"score":-1,"justification":"x"}"#).is_err());
        assert!(parse_score_output(r#"{"score":2,"justification":"  "}"#).is_err());
        assert!(parse_score_output(r#"{"score":2.5,"justification":"x"}"#).is_err());
        assert_eq!(
            parse_score_output(r#"{"score":0,"justification":"none"}"#)
                .unwrap()
                .score,
            0
        );
    }

    #[test]
    fn report_parsing_edges() {
        assert!(parse_report_output(r#"{"current_practices":[""],"challenges":[],"strategic_goals":[]}"#).is_err());
        assert!(parse_report_output(r#"{"current_practices":[],"challenges":[]}"#).is_err());
        assert!(parse_report_output(r#"{"current_practices":[],"challenges":[],"strategic_goals":[],"x":1}"#).is_err());
        assert!(parse_report_output(VALID).is_ok());
    }

    fn sample_report() -> Report {
        Report {
            session_id: Uuid::nil(),
            generated_at: Timestamp::from_millis(0),
            current_practices: vec!["Manual planning".into()],
            challenges: vec![],
            strategic_goals: vec!["ERP rollout".into()],
            scores: Some(BTreeMap::from([(
                QuestionId::new("supply.1"),
                ScoreEntry {
                    score: 2,
                    justification: "Spreadsheet | based".into(),
                },
            )])),
            model: "m".into(),
        }
    }

    #[test]
    fn markdown_has_sections_in_order() {
        let md = render_report(&sample_report(), ReportFormat::Markdown);
        let a = md.find("## Current Practices").unwrap();
        let b = md.find("## Challenges").unwrap();
        let c = md.find("## Strategic Goals").unwrap();
        assert!(a < b && b < c);
        assert!(md[b..c].contains("none identified"));
        assert!(md.contains("Spreadsheet \\| based"));
    }

    #[test]
    fn json_render_round_trips() {
        let r = sample_report();
        let back: Report = serde_json::from_str(&render_report(&r, ReportFormat::Json)).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn validation_rejects_bad_reports() {
        let mut r = sample_report();
        r.current_practices.push(" ".into());
        assert!(r.validate().is_err());
        let mut r = sample_report();
        r.scores.as_mut().unwrap().values_mut().next().unwrap().score = 7;
        assert!(r.validate().is_err());
    }
}
