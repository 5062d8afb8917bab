//! Append-only run ledger and HTTP trace capture.
//!
//! Every session writes `{dir}/{session_id}.jsonl`, one event per line with
//! exactly the fields `event_id, session_id, kind, payload, ts`. Events are
//! written and flushed before the pipeline acts on them.

mod proxy;
mod trace;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use proxy::{CaptureProxy, ObservedRequest, LINK_EVENT_HEADER, LINK_RUN_HEADER};
pub use trace::{current_link, load_traces, with_trace_link, HttpTrace, TraceLink, TraceStore};

/// Timestamp written by a frozen clock.
pub const REPLAY_EPOCH: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("unknown session `{0}`")]
    SessionNotFound(String),
    #[error("session `{0}` already has a ledger")]
    SessionExists(String),
    #[error("session `{0}` is closed")]
    SessionClosed(String),
    #[error("session `{0}` is still open")]
    SessionOpen(String),
    #[error("invalid {kind} event: {reason}")]
    InvalidEvent { kind: AuditKind, reason: String },
    #[error("malformed ledger line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("ledger I/O failed for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    UserPrompt,
    Retrieval,
    ModelRequest,
    ModelResponse,
    ToolCall,
    ToolResult,
    Error,
}

impl std::fmt::Display for AuditKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).expect("kind serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPromptPayload {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedPassage {
    pub chunk_id: String,
    pub source: String,
    pub ordinal: usize,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalPayload {
    pub query: String,
    pub k: usize,
    pub passages: Vec<RetrievedPassage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequestPayload {
    pub model: String,
    pub message_count: usize,
    pub tools: Vec<String>,
    pub temperature: f64,
    pub top_p: f64,
    pub min_p: Option<f64>,
    /// Request fields removed because the endpoint rejected them.
    pub stripped_fields: Vec<String>,
    pub request_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponsePayload {
    pub content: String,
    pub finish_reason: Option<String>,
    pub metadata: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallPayload {
    pub call_id: String,
    pub tool: String,
    /// Parsed argument object, or the raw string when it is not valid JSON.
    pub arguments: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResultPayload {
    pub call_id: String,
    pub tool: String,
    /// Event id of the matching `tool_call`.
    pub call_event_id: u64,
    pub ok: bool,
    pub output: String,
    #[serde(default)]
    pub trace_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub stage: String,
    pub message: String,
    pub related_event_id: Option<u64>,
    #[serde(default)]
    pub trace_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventPayload {
    UserPrompt(UserPromptPayload),
    Retrieval(RetrievalPayload),
    ModelRequest(ModelRequestPayload),
    ModelResponse(ModelResponsePayload),
    ToolCall(ToolCallPayload),
    ToolResult(ToolResultPayload),
    Error(ErrorPayload),
}

impl EventPayload {
    pub fn kind(&self) -> AuditKind {
        match self {
            EventPayload::UserPrompt(_) => AuditKind::UserPrompt,
            EventPayload::Retrieval(_) => AuditKind::Retrieval,
            EventPayload::ModelRequest(_) => AuditKind::ModelRequest,
            EventPayload::ModelResponse(_) => AuditKind::ModelResponse,
            EventPayload::ToolCall(_) => AuditKind::ToolCall,
            EventPayload::ToolResult(_) => AuditKind::ToolResult,
            EventPayload::Error(_) => AuditKind::Error,
        }
    }

    fn to_value(&self) -> Value {
        let v = match self {
            EventPayload::UserPrompt(p) => serde_json::to_value(p),
            EventPayload::Retrieval(p) => serde_json::to_value(p),
            EventPayload::ModelRequest(p) => serde_json::to_value(p),
            EventPayload::ModelResponse(p) => serde_json::to_value(p),
            EventPayload::ToolCall(p) => serde_json::to_value(p),
            EventPayload::ToolResult(p) => serde_json::to_value(p),
            EventPayload::Error(p) => serde_json::to_value(p),
        };
        v.expect("payload serializes")
    }

    /// Validates `value` against the schema for `kind`.
    pub fn from_value(kind: AuditKind, value: &Value) -> Result<Self, AuditError> {
        fn parse<T: serde::de::DeserializeOwned>(kind: AuditKind, value: &Value) -> Result<T, AuditError> {
            serde_json::from_value(value.clone()).map_err(|e| AuditError::InvalidEvent {
                kind,
                reason: e.to_string(),
            })
        }
        Ok(match kind {
            AuditKind::UserPrompt => EventPayload::UserPrompt(parse(kind, value)?),
            AuditKind::Retrieval => EventPayload::Retrieval(parse(kind, value)?),
            AuditKind::ModelRequest => EventPayload::ModelRequest(parse(kind, value)?),
            AuditKind::ModelResponse => EventPayload::ModelResponse(parse(kind, value)?),
            AuditKind::ToolCall => EventPayload::ToolCall(parse(kind, value)?),
            AuditKind::ToolResult => EventPayload::ToolResult(parse(kind, value)?),
            AuditKind::Error => EventPayload::Error(parse(kind, value)?),
        })
    }
}

/// One ledger line. Field order matches the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEvent {
    pub event_id: u64,
    pub session_id: String,
    pub kind: AuditKind,
    pub payload: Value,
    pub ts: String,
}

impl AuditEvent {
    pub fn typed(&self) -> Result<EventPayload, AuditError> {
        EventPayload::from_value(self.kind, &self.payload)
    }
}

#[derive(Debug, Clone)]
pub enum Clock {
    Real,
    /// Every event gets the same timestamp (replay mode).
    Frozen(String),
}

impl Clock {
    pub fn replay() -> Self {
        Clock::Frozen(REPLAY_EPOCH.to_string())
    }

    fn now(&self) -> String {
        match self {
            Clock::Real => chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            Clock::Frozen(ts) => ts.clone(),
        }
    }
}

/// Summary of an exported run ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub path: PathBuf,
    /// SHA-256 over the ledger with timestamps normalized.
    pub content_hash: String,
    pub event_count: usize,
}

struct SessionLedger {
    path: PathBuf,
    file: File,
    events: Vec<AuditEvent>,
    closed: bool,
}

pub struct AuditLog {
    dir: PathBuf,
    clock: Clock,
    durable: bool,
    sessions: Mutex<HashMap<String, Arc<Mutex<SessionLedger>>>>,
}

impl std::fmt::Debug for AuditLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuditLog")
            .field("dir", &self.dir)
            .field("clock", &self.clock)
            .finish()
    }
}

fn io_err(path: &Path, source: std::io::Error) -> AuditError {
    AuditError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl AuditLog {
    pub fn new(dir: impl Into<PathBuf>, clock: Clock) -> Result<Self, AuditError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        Ok(Self {
            dir,
            clock,
            durable: true,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    /// Skips `fsync` after each event. Events are still flushed to the OS.
    pub fn without_fsync(mut self) -> Self {
        self.durable = false;
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn ledger_path(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }

    /// Creates the ledger file. Existing ledgers are never reopened.
    pub fn open_session(&self, session_id: &str) -> Result<(), AuditError> {
        let mut sessions = self.sessions.lock().expect("audit sessions poisoned");
        if sessions.contains_key(session_id) {
            return Err(AuditError::SessionExists(session_id.to_string()));
        }
        let path = self.ledger_path(session_id);
        let file = OpenOptions::new()
            .append(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => AuditError::SessionExists(session_id.to_string()),
                _ => io_err(&path, e),
            })?;
        sessions.insert(
            session_id.to_string(),
            Arc::new(Mutex::new(SessionLedger {
                path,
                file,
                events: Vec::new(),
                closed: false,
            })),
        );
        Ok(())
    }

    fn ledger(&self, session_id: &str) -> Result<Arc<Mutex<SessionLedger>>, AuditError> {
        self.sessions
            .lock()
            .expect("audit sessions poisoned")
            .get(session_id)
            .cloned()
            .ok_or_else(|| AuditError::SessionNotFound(session_id.to_string()))
    }

    /// Appends an event and returns its id. The line is on disk when this returns.
    pub fn record(&self, session_id: &str, payload: EventPayload) -> Result<u64, AuditError> {
        let ledger = self.ledger(session_id)?;
        let mut ledger = ledger.lock().expect("session ledger poisoned");
        if ledger.closed {
            return Err(AuditError::SessionClosed(session_id.to_string()));
        }
        check_references(&ledger.events, &payload)?;
        let event = AuditEvent {
            event_id: ledger.events.last().map_or(1, |e| e.event_id + 1),
            session_id: session_id.to_string(),
            kind: payload.kind(),
            payload: payload.to_value(),
            ts: self.clock.now(),
        };
        let mut line = serde_json::to_vec(&event).expect("event serializes");
        line.push(b'\n');
        let path = ledger.path.clone();
        ledger.file.write_all(&line).map_err(|e| io_err(&path, e))?;
        ledger.file.flush().map_err(|e| io_err(&path, e))?;
        if self.durable {
            ledger.file.sync_data().map_err(|e| io_err(&path, e))?;
        }
        let id = event.event_id;
        ledger.events.push(event);
        Ok(id)
    }

    pub fn events(&self, session_id: &str) -> Result<Vec<AuditEvent>, AuditError> {
        let ledger = self.ledger(session_id)?;
        let ledger = ledger.lock().expect("session ledger poisoned");
        Ok(ledger.events.clone())
    }

    pub fn close_session(&self, session_id: &str) -> Result<(), AuditError> {
        let ledger = self.ledger(session_id)?;
        ledger.lock().expect("session ledger poisoned").closed = true;
        Ok(())
    }

    pub fn is_closed(&self, session_id: &str) -> Result<bool, AuditError> {
        let ledger = self.ledger(session_id)?;
        let closed = ledger.lock().expect("session ledger poisoned").closed;
        Ok(closed)
    }

    /// Finalizes a closed session's ledger and returns its record.
    pub fn export_run(&self, session_id: &str) -> Result<RunRecord, AuditError> {
        let ledger = self.ledger(session_id)?;
        let ledger = ledger.lock().expect("session ledger poisoned");
        if !ledger.closed {
            return Err(AuditError::SessionOpen(session_id.to_string()));
        }
        let on_disk = import_run(&ledger.path)?;
        if on_disk != ledger.events {
            return Err(AuditError::Malformed {
                line: 0,
                reason: "ledger file diverges from recorded events".into(),
            });
        }
        Ok(RunRecord {
            run_id: session_id.to_string(),
            path: ledger.path.clone(),
            content_hash: content_hash(&ledger.events),
            event_count: ledger.events.len(),
        })
    }
}

fn check_references(events: &[AuditEvent], payload: &EventPayload) -> Result<(), AuditError> {
    if let EventPayload::ToolResult(result) = payload {
        let issued = events.iter().any(|e| {
            e.event_id == result.call_event_id
                && e.kind == AuditKind::ToolCall
                && e.payload.get("call_id").and_then(Value::as_str) == Some(result.call_id.as_str())
        });
        if !issued {
            return Err(AuditError::InvalidEvent {
                kind: AuditKind::ToolResult,
                reason: format!(
                    "no tool_call event {} with call id `{}`",
                    result.call_event_id, result.call_id
                ),
            });
        }
    }
    Ok(())
}

/// Reads and validates a ledger file.
pub fn import_run(path: &Path) -> Result<Vec<AuditEvent>, AuditError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut events: Vec<AuditEvent> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event: AuditEvent = serde_json::from_str(&line).map_err(|e| AuditError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        event.typed()?;
        if let Some(prev) = events.last() {
            if event.event_id <= prev.event_id || event.session_id != prev.session_id {
                return Err(AuditError::Malformed {
                    line: i + 1,
                    reason: "event ids must increase within one session".into(),
                });
            }
        }
        events.push(event);
    }
    Ok(events)
}

/// Ledger bytes with every timestamp replaced by [`REPLAY_EPOCH`].
pub fn normalized_bytes(events: &[AuditEvent]) -> Vec<u8> {
    let mut out = Vec::new();
    for event in events {
        let mut e = event.clone();
        e.ts = REPLAY_EPOCH.to_string();
        out.extend(serde_json::to_vec(&e).expect("event serializes"));
        out.push(b'\n');
    }
    out
}

pub fn content_hash(events: &[AuditEvent]) -> String {
    hex::encode(Sha256::digest(normalized_bytes(events)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log() -> (tempfile::TempDir, AuditLog) {
        let dir = tempfile::tempdir().unwrap();
        let log = AuditLog::new(dir.path(), Clock::replay()).unwrap();
        (dir, log)
    }

    fn prompt(text: &str) -> EventPayload {
        EventPayload::UserPrompt(UserPromptPayload { text: text.into() })
    }

    #[test]
    fn first_event_gets_id_one() {
        let (_d, log) = log();
        log.open_session("s").unwrap();
        assert_eq!(log.record("s", prompt("hi")).unwrap(), 1);
        assert_eq!(log.record("s", prompt("again")).unwrap(), 2);
    }

    #[test]
    fn tool_result_must_reference_its_call() {
        let (_d, log) = log();
        log.open_session("s").unwrap();
        let call = log
            .record(
                "s",
                EventPayload::ToolCall(ToolCallPayload {
                    call_id: "c1".into(),
                    tool: "get_methods".into(),
                    arguments: serde_json::json!({"path": "A.java"}),
                }),
            )
            .unwrap();
        let result = |call_id: &str, call_event_id| {
            EventPayload::ToolResult(ToolResultPayload {
                call_id: call_id.into(),
                tool: "get_methods".into(),
                call_event_id,
                ok: true,
                output: "{}".into(),
                trace_ids: vec![],
            })
        };
        assert!(matches!(
            log.record("s", result("c2", call)),
            Err(AuditError::InvalidEvent { .. })
        ));
        assert_eq!(log.record("s", result("c1", call)).unwrap(), call + 1);
    }

    #[test]
    fn unknown_session_is_rejected() {
        let (_d, log) = log();
        assert!(matches!(
            log.record("nope", prompt("x")),
            Err(AuditError::SessionNotFound(_))
        ));
        assert!(matches!(log.export_run("nope"), Err(AuditError::SessionNotFound(_))));
    }

    #[test]
    fn ledgers_are_never_reopened() {
        let (dir, log) = log();
        log.open_session("s").unwrap();
        assert!(matches!(log.open_session("s"), Err(AuditError::SessionExists(_))));
        let other = AuditLog::new(dir.path(), Clock::Real).unwrap();
        assert!(matches!(other.open_session("s"), Err(AuditError::SessionExists(_))));
    }

    #[test]
    fn closed_sessions_reject_events_and_export() {
        let (_d, log) = log();
        log.open_session("s").unwrap();
        log.record("s", prompt("x")).unwrap();
        assert!(matches!(log.export_run("s"), Err(AuditError::SessionOpen(_))));
        log.close_session("s").unwrap();
        assert!(matches!(
            log.record("s", prompt("y")),
            Err(AuditError::SessionClosed(_))
        ));
        let record = log.export_run("s").unwrap();
        assert_eq!(record.event_count, 1);
    }

    #[test]
    fn ledger_lines_have_exact_fields() {
        let (_d, log) = log();
        log.open_session("s").unwrap();
        log.record("s", prompt("x")).unwrap();
        let text = std::fs::read_to_string(log.ledger_path("s")).unwrap();
        let value: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let mut keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["event_id", "kind", "payload", "session_id", "ts"]);
        assert_eq!(value["kind"], "user_prompt");
        assert_eq!(value["ts"], REPLAY_EPOCH);
    }

    #[test]
    fn import_rejects_schema_violations() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"event_id\":1,\"session_id\":\"s\",\"kind\":\"user_prompt\",\"payload\":{},\"ts\":\"t\"}\n",
        )
        .unwrap();
        assert!(matches!(import_run(&path), Err(AuditError::InvalidEvent { .. })));
    }

    #[test]
    fn hash_ignores_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let a = AuditLog::new(dir.path().join("a"), Clock::Real).unwrap();
        let b = AuditLog::new(dir.path().join("b"), Clock::Frozen("2030-01-01T00:00:00Z".into())).unwrap();
        for log in [&a, &b] {
            log.open_session("s").unwrap();
            log.record("s", prompt("x")).unwrap();
        }
        assert_eq!(
            content_hash(&a.events("s").unwrap()),
            content_hash(&b.events("s").unwrap())
        );
    }
}
