use std::cell::RefCell;
use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{io_err, AuditError};
use crate::http::{HttpExchange, TraceDirection, TraceSink};

/// Run that receives traces captured outside any linked scope.
const UNLINKED_RUN: &str = "unlinked";

/// Pipeline event that outgoing HTTP traffic belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceLink {
    pub session_id: String,
    pub event_id: u64,
}

struct Scope {
    link: TraceLink,
    captured: Vec<String>,
}

thread_local! {
    static SCOPES: RefCell<Vec<Scope>> = const { RefCell::new(Vec::new()) };
}

/// Runs `f` with `link` as the current trace link and returns the ids of
/// traces captured on this thread meanwhile.
pub fn with_trace_link<R>(link: TraceLink, f: impl FnOnce() -> R) -> (R, Vec<String>) {
    SCOPES.with(|s| {
        s.borrow_mut().push(Scope {
            link,
            captured: Vec::new(),
        })
    });
    struct Pop;
    impl Drop for Pop {
        fn drop(&mut self) {
            SCOPES.with(|s| {
                s.borrow_mut().pop();
            });
        }
    }
    let guard = Pop;
    let out = f();
    let captured = SCOPES.with(|s| {
        s.borrow_mut()
            .last_mut()
            .map(|scope| std::mem::take(&mut scope.captured))
            .unwrap_or_default()
    });
    drop(guard);
    (out, captured)
}

pub fn current_link() -> Option<TraceLink> {
    SCOPES.with(|s| s.borrow().last().map(|scope| scope.link.clone()))
}

fn note_captured(trace_id: &str) {
    SCOPES.with(|s| {
        if let Some(scope) = s.borrow_mut().last_mut() {
            scope.captured.push(trace_id.to_string());
        }
    });
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpTrace {
    pub trace_id: String,
    pub run_id: String,
    pub direction: TraceDirection,
    pub method: String,
    pub url: String,
    /// 0 when the upstream could not be reached.
    pub status: u16,
    pub event_id: Option<u64>,
    pub request_bytes: usize,
    pub response_bytes: usize,
}

/// Stores raw exchanges under `{root}/{run_id}/traces/`: `{trace_id}.request`,
/// `{trace_id}.response` and a `{trace_id}.json` descriptor.
#[derive(Debug)]
pub struct TraceStore {
    root: PathBuf,
    counters: Mutex<HashMap<String, u64>>,
    captured: Mutex<Vec<HttpTrace>>,
}

impl TraceStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            counters: Mutex::new(HashMap::new()),
            captured: Mutex::new(Vec::new()),
        }
    }

    pub fn traces_dir(&self, run_id: &str) -> PathBuf {
        self.root.join(run_id).join("traces")
    }

    pub fn capture_trace(
        &self,
        run_id: &str,
        direction: TraceDirection,
        exchange: &HttpExchange,
        linked_event: Option<u64>,
    ) -> Result<String, AuditError> {
        // The counter lock is held through the writes so ids and files stay in step.
        let mut counters = self.counters.lock().expect("trace counters poisoned");
        let n = counters.entry(run_id.to_string()).or_insert(0);
        *n += 1;
        let trace_id = format!("t{:04}", *n);
        let dir = self.traces_dir(run_id);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let request = exchange.request_bytes();
        let response = exchange.response_bytes();
        let trace = HttpTrace {
            trace_id: trace_id.clone(),
            run_id: run_id.to_string(),
            direction,
            method: exchange.method.clone(),
            url: exchange.url.clone(),
            status: exchange.status,
            event_id: linked_event,
            request_bytes: request.len(),
            response_bytes: response.len(),
        };
        let write = |name: String, bytes: &[u8]| {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| io_err(&path, e))
        };
        write(format!("{trace_id}.request"), &request)?;
        write(format!("{trace_id}.response"), &response)?;
        write(
            format!("{trace_id}.json"),
            &serde_json::to_vec_pretty(&trace).expect("trace serializes"),
        )?;
        drop(counters);
        self.captured.lock().expect("trace list poisoned").push(trace);
        Ok(trace_id)
    }

    /// Traces captured by this store for `run_id`, in capture order.
    pub fn traces(&self, run_id: &str) -> Vec<HttpTrace> {
        self.captured
            .lock()
            .expect("trace list poisoned")
            .iter()
            .filter(|t| t.run_id == run_id)
            .cloned()
            .collect()
    }
}

impl TraceSink for TraceStore {
    fn capture(&self, direction: TraceDirection, exchange: &HttpExchange) -> Option<String> {
        let link = current_link();
        let (run_id, event) = match &link {
            Some(l) => (l.session_id.as_str(), Some(l.event_id)),
            None => (UNLINKED_RUN, None),
        };
        match self.capture_trace(run_id, direction, exchange, event) {
            Ok(id) => {
                note_captured(&id);
                Some(id)
            }
            Err(e) => {
                tracing::warn!(error = %e, "failed to store HTTP trace");
                None
            }
        }
    }
}

/// Reads the trace descriptors of one run from disk, ordered by trace id.
pub fn load_traces(root: &Path, run_id: &str) -> Result<Vec<HttpTrace>, AuditError> {
    let dir = root.join(run_id).join("traces");
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut traces = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
        let path = entry.map_err(|e| io_err(&dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
            let trace: HttpTrace = serde_json::from_slice(&bytes).map_err(|e| AuditError::Malformed {
                line: 0,
                reason: format!("{}: {e}", path.display()),
            })?;
            traces.push(trace);
        }
    }
    traces.sort_by(|a, b| a.trace_id.cmp(&b.trace_id));
    Ok(traces)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exchange(status: u16) -> HttpExchange {
        HttpExchange {
            method: "POST".into(),
            url: "http://m/v1/chat/completions".into(),
            request_headers: vec![("content-type".into(), "application/json".into())],
            request_body: b"{}".to_vec(),
            status,
            response_headers: vec![],
            response_body: b"{\"ok\":true}".to_vec(),
        }
    }

    #[test]
    fn raw_bytes_are_stored_verbatim() {
        let dir = tempfile::tempdir().unwrap();
        let store = TraceStore::new(dir.path());
        let id = store
            .capture_trace("run", TraceDirection::ToModel, &exchange(200), Some(3))
            .unwrap();
        assert_eq!(id, "t0001");
        let raw = fs::read(store.traces_dir("run").join("t0001.response")).unwrap();
        assert!(raw.ends_with(b"{\"ok\":true}"));
        let loaded = load_traces(dir.path(), "run").unwrap();
        assert_eq!(loaded, store.traces("run"));
        assert_eq!(loaded[0].event_id, Some(3));
    }

    #[test]
    fn sink_uses_the_innermost_link() {
        let dir = tempfile::tempdir().unwrap();
        let store = TraceStore::new(dir.path());
        let link = TraceLink {
            session_id: "s1".into(),
            event_id: 7,
        };
        let (id, captured) = with_trace_link(link, || store.capture(TraceDirection::ToProvider, &exchange(404)));
        assert_eq!(captured, vec![id.unwrap()]);
        assert_eq!(store.traces("s1")[0].event_id, Some(7));
        assert!(current_link().is_none());
        store.capture(TraceDirection::ToProvider, &exchange(200));
        assert_eq!(store.traces(UNLINKED_RUN).len(), 1);
    }
}
