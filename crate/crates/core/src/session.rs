//! Persisted interview records: client profile, labelled transcript and workflow state.

use std::fmt;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;
use uuid::Uuid;

use crate::catalog::QuestionCatalog;
use crate::workflow::{Phase, WorkflowState};

/// UTC instant with millisecond precision, serialized as RFC 3339 (`2026-01-02T03:04:05.678Z`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(DateTime<Utc>);

impl Timestamp {
    pub fn now() -> Self {
        Self::from_millis(Utc::now().timestamp_millis())
    }

    pub fn from_millis(millis: i64) -> Self {
        Self(
            Utc.timestamp_millis_opt(millis)
                .single()
                .unwrap_or(DateTime::<Utc>::UNIX_EPOCH),
        )
    }

    pub fn millis(&self) -> i64 {
        self.0.timestamp_millis()
    }

    pub fn as_datetime(&self) -> DateTime<Utc> {
        self.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_rfc3339_opts(SecondsFormat::Millis, true))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        let parsed = DateTime::parse_from_rfc3339(&raw).map_err(serde::de::Error::custom)?;
        Ok(Self::from_millis(parsed.timestamp_millis()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientProfile {
    pub company_name: String,
    pub client_name: String,
    pub industry_type: String,
    pub industry_size: String,
    pub job_title: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("client profile field `{0}` must be nonempty")]
pub struct ProfileError(pub &'static str);

impl ClientProfile {
    pub fn validate(&self) -> Result<(), ProfileError> {
        for (name, value) in [
            ("company_name", &self.company_name),
            ("client_name", &self.client_name),
            ("job_title", &self.job_title),
        ] {
            if value.trim().is_empty() {
                return Err(ProfileError(name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    #[default]
    Text,
    AudioTranscribed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Message {
    pub id: u64,
    pub role: Role,
    pub content: String,
    pub modality: Modality,
    pub detected_language: Option<String>,
    pub timestamp: Timestamp,
    pub tool_call_id: Option<String>,
}

/// A message that has not been assigned a sequence number yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewMessage {
    pub role: Role,
    pub content: String,
    pub modality: Modality,
    pub detected_language: Option<String>,
    pub tool_call_id: Option<String>,
}

impl NewMessage {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            modality: Modality::Text,
            detected_language: None,
            tool_call_id: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            tool_call_id: Some(call_id.into()),
            ..Self::plain(Role::Tool, content)
        }
    }

    pub fn into_message(self, id: u64, timestamp: Timestamp) -> Message {
        Message {
            id,
            role: self.role,
            content: self.content.trim_end().to_owned(),
            modality: self.modality,
            detected_language: self.detected_language,
            timestamp,
            tool_call_id: self.tool_call_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Session {
    pub session_id: Uuid,
    pub profile: ClientProfile,
    pub catalog_version: String,
    pub status: SessionStatus,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
    pub state: WorkflowState,
    pub messages: Vec<Message>,
}

impl Session {
    /// A fresh, unsaved session.
    pub fn new(profile: ClientProfile, catalog: &QuestionCatalog) -> Result<Self, ProfileError> {
        profile.validate()?;
        let now = Timestamp::now();
        Ok(Self {
            session_id: Uuid::new_v4(),
            profile,
            catalog_version: catalog.version.clone(),
            status: SessionStatus::Active,
            created_at: now,
            updated_at: now,
            state: WorkflowState::new(),
            messages: Vec::new(),
        })
    }

    pub fn last_message_id(&self) -> u64 {
        self.messages.last().map_or(0, |m| m.id)
    }

    pub fn is_active(&self) -> bool {
        self.status == SessionStatus::Active
    }

    /// Appends messages with consecutive ids and applies a new workflow state.
    ///
    /// The status follows the workflow: it becomes `Completed` once the phase is.
    pub fn apply(&mut self, messages: Vec<NewMessage>, state: Option<WorkflowState>, now: Timestamp) {
        let mut next_id = self.last_message_id();
        for message in messages {
            next_id += 1;
            self.messages.push(message.into_message(next_id, now));
        }
        if let Some(state) = state {
            self.state = state;
        }
        if self.state.phase == Phase::Completed {
            self.status = SessionStatus::Completed;
        }
        self.updated_at = now;
    }

    /// Checks the document-level invariants.
    pub fn validate(&self) -> Result<(), String> {
        self.profile.validate().map_err(|e| e.to_string())?;
        let mut last = 0;
        for (i, m) in self.messages.iter().enumerate() {
            if m.id <= last {
                return Err(format!("messages[{i}].id is not strictly increasing"));
            }
            last = m.id;
            if m.role == Role::Tool && m.tool_call_id.is_none() {
                return Err(format!("messages[{i}] is a tool message without tool_call_id"));
            }
        }
        if self.status == SessionStatus::Completed && self.state.phase != Phase::Completed {
            return Err("status is completed but the workflow is not".into());
        }
        if self.updated_at < self.created_at {
            return Err("updated_at precedes created_at".into());
        }
        Ok(())
    }
}
