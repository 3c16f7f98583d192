//! File-backed session store.
//!
//! Layout under the data directory:
//!
//! ```text
//! sessions/<uuid>.json   one canonical JSON document per session
//! reports/<uuid>.json    latest generated report, if any
//! audio/<uuid>/<n>.<ext> retained audio clips (only when enabled)
//! index.json             summaries used by `list_sessions`; rebuilt on open
//! ```
//!
//! Every write goes to a temporary file that is renamed into place, so a
//! reader always sees the last durable snapshot.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::catalog::QuestionCatalog;
use crate::report::Report;
use crate::session::{ClientProfile, NewMessage, ProfileError, Session, SessionStatus, Timestamp};
use crate::workflow::{Progress, WorkflowState};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("session {0} not found")]
    NotFound(Uuid),
    #[error("session {0} is completed; retrieve its report instead")]
    Completed(Uuid),
    #[error("session {0} already has a turn in flight")]
    Busy(Uuid),
    #[error("sequence conflict: expected last message id {expected}, store has {found}")]
    SequenceConflict { expected: u64, found: u64 },
    #[error("corrupt document {path}: {message}")]
    Corrupt { path: String, message: String },
    #[error(transparent)]
    InvalidProfile(#[from] ProfileError),
    #[error("report rejected: {0}")]
    InvalidReport(String),
    #[error("storage failure at {path}: {message}")]
    Io { path: String, message: String },
    #[cfg(feature = "fault-injection")]
    #[error("injected fault at {0:?}")]
    Injected(FaultPoint),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Where a commit is interrupted when fault injection is armed.
#[cfg(feature = "fault-injection")]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Before anything reaches the disk.
    BeforeWrite,
    /// After the temporary file is written but before it replaces the document.
    BeforeRename,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionFilter {
    pub company: Option<String>,
    pub client: Option<String>,
    pub job_title: Option<String>,
    pub status: Option<SessionStatus>,
}

fn field_matches(wanted: &Option<String>, actual: &str) -> bool {
    wanted
        .as_deref()
        .is_none_or(|w| w.trim().eq_ignore_ascii_case(actual.trim()))
}

impl SessionFilter {
    pub fn matches(&self, profile: &ClientProfile, status: SessionStatus) -> bool {
        field_matches(&self.company, &profile.company_name)
            && field_matches(&self.client, &profile.client_name)
            && field_matches(&self.job_title, &profile.job_title)
            && self.status.is_none_or(|s| s == status)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: Uuid,
    pub profile: ClientProfile,
    pub status: SessionStatus,
    pub created_at: Timestamp,
    pub updated_at: Timestamp,
    pub progress: Option<Progress>,
}

impl SessionSummary {
    pub fn of(session: &Session, catalog: &QuestionCatalog) -> Self {
        Self {
            session_id: session.session_id,
            profile: session.profile.clone(),
            status: session.status,
            created_at: session.created_at,
            updated_at: session.updated_at,
            progress: session.state.progress(catalog).ok(),
        }
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    sessions: BTreeMap<Uuid, SessionSummary>,
}

/// Canonical encoding: keys sorted, two-space indentation, trailing newline.
pub fn encode_canonical<T: Serialize>(value: &T) -> Vec<u8> {
    // serde_json::Value keeps object keys in a BTreeMap, which sorts them.
    let value = serde_json::to_value(value).expect("store types serialize to JSON");
    let mut out = serde_json::to_vec_pretty(&value).expect("JSON values always encode");
    out.push(b'\n');
    out
}

pub fn encode_session(session: &Session) -> Vec<u8> {
    encode_canonical(session)
}

/// Decodes and validates a session document.
pub fn decode_session(bytes: &[u8]) -> Result<Session, String> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let session: Session = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        format!("at `{path}`: {}", e.into_inner())
    })?;
    de.end().map_err(|e| e.to_string())?;
    session.validate()?;
    Ok(session)
}

/// Exclusive right to run a turn on one session; released on drop.
#[derive(Debug)]
pub struct SessionLease {
    id: Uuid,
    held: Arc<Mutex<HashSet<Uuid>>>,
}

impl SessionLease {
    pub fn session_id(&self) -> Uuid {
        self.id
    }
}

impl Drop for SessionLease {
    fn drop(&mut self) {
        self.held.lock().unwrap_or_else(|p| p.into_inner()).remove(&self.id);
    }
}

#[derive(Debug)]
pub struct SessionStore {
    root: PathBuf,
    catalog: Arc<QuestionCatalog>,
    // serializes document + index writes
    write_lock: Mutex<()>,
    leases: Arc<Mutex<HashSet<Uuid>>>,
    #[cfg(feature = "fault-injection")]
    fault: Mutex<Option<FaultPoint>>,
}

impl SessionStore {
    /// Opens (creating if needed) a store rooted at `root`.
    ///
    /// Leftover temporary files from interrupted commits are discarded and the
    /// index is rebuilt from the session documents.
    pub fn open(root: impl Into<PathBuf>, catalog: Arc<QuestionCatalog>) -> Result<Self, StoreError> {
        let root = root.into();
        for dir in ["sessions", "reports", "audio"] {
            let path = root.join(dir);
            fs::create_dir_all(&path).map_err(|e| io_err(&path, e))?;
        }
        let store = Self {
            root,
            catalog,
            write_lock: Mutex::new(()),
            leases: Arc::new(Mutex::new(HashSet::new())),
            #[cfg(feature = "fault-injection")]
            fault: Mutex::new(None),
        };
        store.recover()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn catalog(&self) -> &QuestionCatalog {
        &self.catalog
    }

    fn session_path(&self, id: Uuid) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.json"))
    }

    fn report_path(&self, id: Uuid) -> PathBuf {
        self.root.join("reports").join(format!("{id}.json"))
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    fn recover(&self) -> Result<(), StoreError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut index = Index::default();
        let dir = self.root.join("sessions");
        for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
            let path = entry.map_err(|e| io_err(&dir, e))?.path();
            match path.extension().and_then(|e| e.to_str()) {
                Some("tmp") => {
                    fs::remove_file(&path).map_err(|e| io_err(&path, e))?;
                }
                Some("json") => match self.read_session_file(&path) {
                    Ok(session) => {
                        index
                            .sessions
                            .insert(session.session_id, SessionSummary::of(&session, &self.catalog));
                    }
                    Err(e) => tracing::warn!(error = %e, "skipping unreadable session document"),
                },
                _ => {}
            }
        }
        self.write_atomic(&self.index_path(), &encode_canonical(&index))
    }

    #[cfg(feature = "fault-injection")]
    /// Arms a one-shot fault for the next session commit.
    pub fn inject_fault(&self, point: FaultPoint) {
        *self.fault.lock().unwrap_or_else(|p| p.into_inner()) = Some(point);
    }

    #[cfg(feature = "fault-injection")]
    fn take_fault(&self, point: FaultPoint) -> Result<(), StoreError> {
        let mut armed = self.fault.lock().unwrap_or_else(|p| p.into_inner());
        if *armed == Some(point) {
            *armed = None;
            return Err(StoreError::Injected(point));
        }
        Ok(())
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let tmp = path.with_extension("json.tmp");
        let mut file = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        file.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
        file.sync_all().map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| io_err(path, e))
    }

    fn write_session(&self, session: &Session) -> Result<(), StoreError> {
        #[cfg(feature = "fault-injection")]
        self.take_fault(FaultPoint::BeforeWrite)?;
        let path = self.session_path(session.session_id);
        let bytes = encode_session(session);
        #[cfg(feature = "fault-injection")]
        {
            let tmp = path.with_extension("json.tmp");
            if self.fault.lock().unwrap_or_else(|p| p.into_inner()).is_some() {
                fs::write(&tmp, &bytes).map_err(|e| io_err(&tmp, e))?;
                self.take_fault(FaultPoint::BeforeRename)?;
            }
        }
        self.write_atomic(&path, &bytes)?;
        self.update_index(session)
    }

    fn update_index(&self, session: &Session) -> Result<(), StoreError> {
        let mut index = self.read_index()?;
        index
            .sessions
            .insert(session.session_id, SessionSummary::of(session, &self.catalog));
        self.write_atomic(&self.index_path(), &encode_canonical(&index))
    }

    fn read_index(&self) -> Result<Index, StoreError> {
        let path = self.index_path();
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Index::default()),
            Err(e) => return Err(io_err(&path, e)),
        };
        serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    fn read_session_file(&self, path: &Path) -> Result<Session, StoreError> {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        decode_session(&bytes).map_err(|message| StoreError::Corrupt {
            path: path.display().to_string(),
            message,
        })
    }

    /// Creates and persists a new session awaiting priorities.
    pub fn create_session(&self, profile: ClientProfile) -> Result<Session, StoreError> {
        let session = Session::new(profile, &self.catalog)?;
        self.save(&session)?;
        Ok(session)
    }

    pub fn save(&self, session: &Session) -> Result<(), StoreError> {
        session.validate().map_err(|message| StoreError::Corrupt {
            path: self.session_path(session.session_id).display().to_string(),
            message,
        })?;
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        self.write_session(session)
    }

    pub fn load(&self, id: Uuid) -> Result<Session, StoreError> {
        let path = self.session_path(id);
        if !path.exists() {
            return Err(StoreError::NotFound(id));
        }
        self.read_session_file(&path)
    }

    /// Loads an active session so the interview can continue from its cursors.
    pub fn resume(&self, id: Uuid) -> Result<Session, StoreError> {
        let session = self.load(id)?;
        if !session.is_active() {
            return Err(StoreError::Completed(id));
        }
        Ok(session)
    }

    /// Appends messages and applies a workflow state in one durable write.
    ///
    /// Fails with `SequenceConflict` when the stored transcript has moved past
    /// `expected_last_id`, i.e. another writer committed in between.
    pub fn commit_turn(
        &self,
        id: Uuid,
        expected_last_id: u64,
        messages: Vec<NewMessage>,
        state: Option<WorkflowState>,
    ) -> Result<Session, StoreError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let mut session = self.load(id)?;
        if !session.is_active() {
            return Err(StoreError::Completed(id));
        }
        let found = session.last_message_id();
        if found != expected_last_id {
            return Err(StoreError::SequenceConflict {
                expected: expected_last_id,
                found,
            });
        }
        let now = Timestamp::now().max(session.updated_at);
        session.apply(messages, state, now);
        self.write_session(&session)?;
        Ok(session)
    }

    pub fn append_messages(&self, id: Uuid, messages: Vec<NewMessage>) -> Result<Session, StoreError> {
        let expected = self.load(id)?.last_message_id();
        self.commit_turn(id, expected, messages, None)
    }

    /// Newest first.
    pub fn list_sessions(&self, filter: &SessionFilter) -> Result<Vec<SessionSummary>, StoreError> {
        let mut out: Vec<SessionSummary> = self
            .read_index()?
            .sessions
            .into_values()
            .filter(|s| filter.matches(&s.profile, s.status))
            .collect();
        out.sort_by(|a, b| {
            b.updated_at
                .cmp(&a.updated_at)
                .then(b.created_at.cmp(&a.created_at))
                .then(a.session_id.cmp(&b.session_id))
        });
        Ok(out)
    }

    /// Takes the per-session turn lease; `Busy` if another turn holds it.
    pub fn lease(&self, id: Uuid) -> Result<SessionLease, StoreError> {
        let mut held = self.leases.lock().unwrap_or_else(|p| p.into_inner());
        if !held.insert(id) {
            return Err(StoreError::Busy(id));
        }
        Ok(SessionLease {
            id,
            held: Arc::clone(&self.leases),
        })
    }

    /// Persists a report after validating it; invalid reports never reach disk.
    pub fn save_report(&self, report: &Report) -> Result<(), StoreError> {
        report.validate().map_err(StoreError::InvalidReport)?;
        if !self.session_path(report.session_id).exists() {
            return Err(StoreError::NotFound(report.session_id));
        }
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        self.write_atomic(&self.report_path(report.session_id), &encode_canonical(report))
    }

    pub fn load_report(&self, id: Uuid) -> Result<Option<Report>, StoreError> {
        let path = self.report_path(id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(io_err(&path, e)),
        };
        let corrupt = |message: String| StoreError::Corrupt {
            path: path.display().to_string(),
            message,
        };
        let report: Report = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
        report.validate().map_err(corrupt)?;
        Ok(Some(report))
    }

    /// Stores a raw audio clip next to the session (audio retention mode).
    pub fn save_audio(&self, id: Uuid, message_id: u64, extension: &str, bytes: &[u8]) -> Result<PathBuf, StoreError> {
        let dir = self.root.join("audio").join(id.to_string());
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let path = dir.join(format!("{message_id}.{extension}"));
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{default_catalog, CategoryId};
    use crate::session::{Message, Role};
    use crate::workflow::Phase;

    fn profile(job: &str) -> ClientProfile {
        ClientProfile {
            company_name: "Acme".into(),
            client_name: "Ada".into(),
            industry_type: "defence".into(),
            industry_size: "50-249".into(),
            job_title: job.into(),
        }
    }

    fn store() -> (tempfile::TempDir, SessionStore) {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path(), Arc::new(default_catalog())).unwrap();
        (dir, store)
    }

    #[test]
    fn create_starts_awaiting_priorities() {
        let (_d, store) = store();
        let s = store.create_session(profile("HR Manager")).unwrap();
        assert_eq!(s.state.phase, Phase::AwaitingPriorities);
        assert!(s.messages.is_empty());
        assert_eq!(store.load(s.session_id).unwrap(), s);
        let other = store.create_session(profile("HR Manager")).unwrap();
        assert_ne!(s.session_id, other.session_id);
    }

    #[test]
    fn create_rejects_empty_job_title() {
        let (_d, store) = store();
        assert!(matches!(
            store.create_session(profile("")),
            Err(StoreError::InvalidProfile(ProfileError("job_title")))
        ));
    }

    #[test]
    fn append_assigns_ids_and_refuses_completed() {
        let (_d, store) = store();
        let s = store.create_session(profile("CTO")).unwrap();
        let s = store
            .append_messages(
                s.session_id,
                vec![NewMessage::user("hello"), NewMessage::assistant("hi")],
            )
            .unwrap();
        let ids: Vec<_> = s.messages.iter().map(|m| m.id).collect();
        assert_eq!(ids, [1, 2]);

        let mut done = s.clone();
        done.state = done
            .state
            .record_priorities(store.catalog(), &[CategoryId::from("rnd")])
            .unwrap();
        done.state.cursor.insert("rnd".into(), 10);
        done.state.sentinel_issued.insert("rnd".into());
        done.state.phase = Phase::Completed;
        done.state.active_category = None;
        done.status = SessionStatus::Completed;
        store.save(&done).unwrap();
        assert!(matches!(
            store.append_messages(s.session_id, vec![NewMessage::user("more")]),
            Err(StoreError::Completed(_))
        ));
        assert!(matches!(store.resume(s.session_id), Err(StoreError::Completed(_))));
    }

    #[test]
    fn stale_writer_gets_sequence_conflict() {
        let (_d, store) = store();
        let s = store.create_session(profile("CTO")).unwrap();
        store
            .commit_turn(s.session_id, 0, vec![NewMessage::user("a")], None)
            .unwrap();
        let err = store
            .commit_turn(s.session_id, 0, vec![NewMessage::user("b")], None)
            .unwrap_err();
        assert!(matches!(err, StoreError::SequenceConflict { expected: 0, found: 1 }));
    }

    #[test]
    fn lease_is_exclusive_until_dropped() {
        let (_d, store) = store();
        let id = Uuid::new_v4();
        let lease = store.lease(id).unwrap();
        assert!(matches!(store.lease(id), Err(StoreError::Busy(_))));
        assert!(store.lease(Uuid::new_v4()).is_ok());
        drop(lease);
        assert!(store.lease(id).is_ok());
    }

    #[test]
    fn missing_and_truncated_documents() {
        let (dir, store) = store();
        assert!(matches!(store.load(Uuid::new_v4()), Err(StoreError::NotFound(_))));
        let s = store.create_session(profile("CTO")).unwrap();
        let path = dir.path().join("sessions").join(format!("{}.json", s.session_id));
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(store.load(s.session_id), Err(StoreError::Corrupt { .. })));
    }

    #[test]
    fn schema_errors_name_the_path() {
        let s = Session::new(profile("CTO"), &default_catalog()).unwrap();
        let mut value = serde_json::to_value(&s).unwrap();
        value["state"]["phase"] = "sleeping".into();
        let err = decode_session(value.to_string().as_bytes()).unwrap_err();
        assert!(err.contains("state.phase"), "{err}");

        let mut value = serde_json::to_value(&s).unwrap();
        value["messages"] = serde_json::json!([{
            "id": 1, "role": "tool", "content": "x", "modality": "text",
            "detected_language": null, "timestamp": "2026-01-01T00:00:00.000Z", "tool_call_id": null
        }]);
        let err = decode_session(value.to_string().as_bytes()).unwrap_err();
        assert!(err.contains("tool_call_id"), "{err}");
    }

    #[test]
    fn document_uses_exact_field_names() {
        let mut s = Session::new(profile("CTO"), &default_catalog()).unwrap();
        s.apply(
            vec![NewMessage::tool("call_1", "q")],
            None,
            Timestamp::from_millis(0).max(s.updated_at),
        );
        let value: serde_json::Value = serde_json::from_slice(&encode_session(&s)).unwrap();
        let keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            keys,
            [
                "catalog_version",
                "created_at",
                "messages",
                "profile",
                "session_id",
                "state",
                "status",
                "updated_at"
            ]
        );
        let state_keys: Vec<_> = value["state"].as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            state_keys,
            [
                "active_category",
                "cursor",
                "phase",
                "priority_order",
                "sentinel_issued"
            ]
        );
        let msg_keys: Vec<_> = value["messages"][0].as_object().unwrap().keys().cloned().collect();
        assert_eq!(
            msg_keys,
            [
                "content",
                "detected_language",
                "id",
                "modality",
                "role",
                "timestamp",
                "tool_call_id"
            ]
        );
        let msg: Message = serde_json::from_value(value["messages"][0].clone()).unwrap();
        assert_eq!(msg.role, Role::Tool);
    }

    #[test]
    fn list_filters_and_orders_newest_first() {
        let (_d, store) = store();
        assert!(store.list_sessions(&SessionFilter::default()).unwrap().is_empty());
        let a = store.create_session(profile("CTO")).unwrap();
        let b = store.create_session(profile("Production Director")).unwrap();
        let c = store.create_session(profile("CTO")).unwrap();
        // timestamps have millisecond resolution
        std::thread::sleep(std::time::Duration::from_millis(3));
        store
            .append_messages(a.session_id, vec![NewMessage::user("latest")])
            .unwrap();

        let all = store.list_sessions(&SessionFilter::default()).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all[0].session_id, a.session_id);

        let cto = store
            .list_sessions(&SessionFilter {
                job_title: Some("cto".into()),
                ..Default::default()
            })
            .unwrap();
        let ids: HashSet<_> = cto.iter().map(|s| s.session_id).collect();
        assert_eq!(ids, HashSet::from([a.session_id, c.session_id]));
        assert!(!ids.contains(&b.session_id));
    }

    #[test]
    fn reopen_rebuilds_index_and_drops_temp_files() {
        let (dir, store) = store();
        let s = store.create_session(profile("CTO")).unwrap();
        fs::remove_file(dir.path().join("index.json")).unwrap();
        fs::write(dir.path().join("sessions").join("junk.json.tmp"), b"{").unwrap();
        drop(store);
        let store = SessionStore::open(dir.path(), Arc::new(default_catalog())).unwrap();
        let listed = store.list_sessions(&SessionFilter::default()).unwrap();
        assert_eq!(listed.len(), 1);
        assert_eq!(listed[0].session_id, s.session_id);
        assert!(!dir.path().join("sessions").join("junk.json.tmp").exists());
    }
}
