//! JSON-over-HTTP front end used by the CLI, the sweep runner and the chat UI.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | GET | `/healthz` | | `{"status":"ok"}` |
//! | GET | `/presets` | | sampling presets |
//! | POST | `/sessions` | `{model, preset?, sampling?, session_id?}` | 201, session; 409 if the id is taken |
//! | GET | `/sessions/{id}` | | session plus `busy` |
//! | POST | `/sessions/{id}/messages` | `{text}` | turn outcome; 409 while a turn is in flight |
//! | GET | `/sessions/{id}/events?after=N` | | ledger events with id > N |
//! | POST | `/sessions/{id}/close` | | run record |

use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{Orchestrator, OrchestratorError, SamplingConfig, SamplingPreset};
use crate::audit::AuditError;
use crate::http::{self, ServeError, ServerHandle};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    model: String,
    #[serde(default)]
    preset: Option<String>,
    #[serde(default)]
    sampling: Option<SamplingConfig>,
    #[serde(default)]
    session_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SendMessage {
    text: String,
}

struct Reply {
    status: u16,
    body: Value,
}

impl Reply {
    fn ok(body: Value) -> Self {
        Self { status: 200, body }
    }

    fn error(status: u16, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({"error": {"kind": kind, "message": message.into()}}),
        }
    }
}

fn orchestrator_error(e: &OrchestratorError) -> Reply {
    let (status, kind) = match e {
        OrchestratorError::UnknownModel(_) => (400, "unknown_model"),
        OrchestratorError::InvalidSampling(_) => (400, "invalid_sampling"),
        OrchestratorError::SessionNotFound(_) => (404, "session_not_found"),
        OrchestratorError::SessionBusy(_) => (409, "session_busy"),
        OrchestratorError::SessionClosed(_) => (409, "session_closed"),
        OrchestratorError::ModelEndpoint(_) => (502, "model_endpoint"),
        OrchestratorError::ToolLoopBudgetExceeded { .. } => (500, "tool_loop_budget_exceeded"),
        OrchestratorError::Retrieval(_) => (500, "retrieval"),
        OrchestratorError::Audit(AuditError::SessionExists(_)) => (409, "session_exists"),
        OrchestratorError::Audit(_) => (500, "audit"),
    };
    Reply::error(status, kind, e.to_string())
}

fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, Reply> {
    serde_json::from_slice(body).map_err(|e| Reply::error(400, "bad_request", e.to_string()))
}

pub struct Gateway {
    orchestrator: Arc<Orchestrator>,
    presets: Vec<SamplingPreset>,
}

impl Gateway {
    pub fn new(orchestrator: Arc<Orchestrator>, presets: Vec<SamplingPreset>) -> Self {
        Self { orchestrator, presets }
    }

    fn route(&self, method: &str, url: &str, body: &[u8]) -> Reply {
        let (path, query) = url.split_once('?').unwrap_or((url, ""));
        let segments: Vec<&str> = path.trim_matches('/').split('/').filter(|s| !s.is_empty()).collect();
        let result = match (method, segments.as_slice()) {
            ("GET", ["healthz"]) => Ok(Reply::ok(json!({"status": "ok"}))),
            ("GET", ["presets"]) => Ok(Reply::ok(json!({"presets": self.presets}))),
            ("POST", ["sessions"]) => self.create(body),
            ("GET", ["sessions", id]) => self.show(id),
            ("POST", ["sessions", id, "messages"]) => self.send(id, body),
            ("GET", ["sessions", id, "events"]) => self.events(id, query),
            ("POST", ["sessions", id, "close"]) => self.close(id),
            (_, ["healthz"] | ["presets"] | ["sessions", ..]) => {
                Err(Reply::error(405, "method_not_allowed", format!("{method} {path}")))
            }
            _ => Err(Reply::error(404, "not_found", format!("no route for {path}"))),
        };
        result.unwrap_or_else(|r| r)
    }

    fn create(&self, body: &[u8]) -> Result<Reply, Reply> {
        let req: CreateSession = parse(body)?;
        let sampling = match (&req.preset, req.sampling) {
            (Some(_), Some(_)) => return Err(Reply::error(400, "bad_request", "give either preset or sampling")),
            (Some(label), None) => {
                self.presets
                    .iter()
                    .find(|p| &p.label == label)
                    .ok_or_else(|| Reply::error(400, "unknown_preset", format!("unknown preset `{label}`")))?
                    .sampling
            }
            (None, Some(s)) => s,
            (None, None) => SamplingConfig::DEFAULT,
        };
        let session = self
            .orchestrator
            .create_session(req.session_id.as_deref(), &req.model, sampling)
            .map_err(|e| orchestrator_error(&e))?;
        Ok(Reply {
            status: 201,
            body: json!({"session": session}),
        })
    }

    fn show(&self, id: &str) -> Result<Reply, Reply> {
        let session = self.orchestrator.session(id).map_err(|e| orchestrator_error(&e))?;
        let busy = self.orchestrator.is_busy(id).map_err(|e| orchestrator_error(&e))?;
        Ok(Reply::ok(json!({"session": session, "busy": busy})))
    }

    fn send(&self, id: &str, body: &[u8]) -> Result<Reply, Reply> {
        let req: SendMessage = parse(body)?;
        let outcome = self
            .orchestrator
            .send_user_message(id, &req.text)
            .map_err(|e| orchestrator_error(&e))?;
        Ok(Reply::ok(json!({"turn": outcome})))
    }

    fn events(&self, id: &str, query: &str) -> Result<Reply, Reply> {
        let mut after = 0u64;
        for pair in query.split('&').filter(|p| !p.is_empty()) {
            match pair.split_once('=') {
                Some(("after", v)) => {
                    after = v
                        .parse()
                        .map_err(|_| Reply::error(400, "bad_request", format!("bad `after` value `{v}`")))?;
                }
                _ => {
                    return Err(Reply::error(
                        400,
                        "bad_request",
                        format!("unknown query parameter `{pair}`"),
                    ))
                }
            }
        }
        let events = self.orchestrator.events(id).map_err(|e| orchestrator_error(&e))?;
        let events: Vec<_> = events.into_iter().filter(|e| e.event_id > after).collect();
        Ok(Reply::ok(json!({"session_id": id, "events": events})))
    }

    fn close(&self, id: &str) -> Result<Reply, Reply> {
        self.orchestrator
            .close_session(id)
            .map_err(|e| orchestrator_error(&e))?;
        let record = self.orchestrator.export_run(id).map_err(|e| orchestrator_error(&e))?;
        Ok(Reply::ok(json!({"run": record})))
    }

    fn handle(&self, mut request: tiny_http::Request) {
        let method = request.method().to_string().to_ascii_uppercase();
        let url = request.url().to_string();
        let cors = |name: &str, value: &str| {
            tiny_http::Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("static header is valid")
        };
        if method == "OPTIONS" {
            let response = tiny_http::Response::empty(204)
                .with_header(cors("Access-Control-Allow-Origin", "*"))
                .with_header(cors("Access-Control-Allow-Methods", "GET, POST, OPTIONS"))
                .with_header(cors("Access-Control-Allow-Headers", "content-type"));
            let _ = request.respond(response);
            return;
        }
        let reply = match http::read_body(&mut request) {
            Ok(body) => self.route(&method, &url, &body),
            Err(e) => Reply::error(400, "bad_request", e.to_string()),
        };
        let bytes = serde_json::to_vec(&reply.body).unwrap_or_default();
        let response = tiny_http::Response::from_data(bytes)
            .with_status_code(reply.status)
            .with_header(cors("Content-Type", "application/json"))
            .with_header(cors("Access-Control-Allow-Origin", "*"));
        let _ = request.respond(response);
    }

    pub fn serve(self, addr: &str) -> Result<ServerHandle, ServeError> {
        let gateway = Arc::new(self);
        http::serve(addr, Arc::new(move |request| gateway.handle(request)))
    }
}
