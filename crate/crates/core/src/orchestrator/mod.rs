//! The prompt, retrieval, generation pipeline with its tool-call loop.

mod client;
mod gateway;
mod request;
mod session;
mod tools;

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub use client::{ChatModel, HttpChatModel, ModelError};
pub use gateway::Gateway;
pub use request::{assemble_request, context_block, strip_context, CONTEXT_CLOSE, CONTEXT_OPEN};
pub use session::{
    system_prompt, ChatMessage, ChatSession, InvalidSampling, ResponseLanguage, Role, SamplingConfig, SamplingPreset,
    ToolCall,
};
pub use tools::{
    error_envelope, execute, ok_envelope, DuplicateTool, ParamSpec, ParamType, ToolError, ToolRegistry, ToolSpec,
    FILE_PATH_FINDER, GET_CONTENT_FROM_FILE, GET_METHODS, LOAD_INVENTORY,
};

use crate::audit::{
    with_trace_link, AuditError, AuditEvent, AuditLog, ErrorPayload, EventPayload, ModelRequestPayload,
    ModelResponsePayload, RetrievalPayload, RetrievedPassage, RunRecord, ToolCallPayload, ToolResultPayload, TraceLink,
    UserPromptPayload,
};
use crate::docs::{DocIndex, DocIndexError, DEFAULT_TOP_K};
use crate::protocol::ChatCompletionRequest;
use crate::repo::RepoSnapshot;

pub const DEFAULT_TOOL_LOOP_BUDGET: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error(transparent)]
    InvalidSampling(#[from] InvalidSampling),
    #[error("session `{0}` not found")]
    SessionNotFound(String),
    #[error("session `{0}` already has a turn in flight")]
    SessionBusy(String),
    #[error("session `{0}` is closed")]
    SessionClosed(String),
    #[error(transparent)]
    ModelEndpoint(#[from] ModelError),
    #[error("tool loop budget of {budget} iterations exceeded")]
    ToolLoopBudgetExceeded { budget: usize },
    #[error("retrieval failed: {0}")]
    Retrieval(String),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

#[derive(Debug, Clone)]
pub struct OrchestratorConfig {
    pub language: ResponseLanguage,
    /// Replaces the built-in system prompt when set.
    pub system_prompt: Option<String>,
    pub top_k: usize,
    pub tool_loop_budget: usize,
    /// Model ids sessions may use; empty accepts any.
    pub models: Vec<String>,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            language: ResponseLanguage::English,
            system_prompt: None,
            top_k: DEFAULT_TOP_K,
            tool_loop_budget: DEFAULT_TOOL_LOOP_BUDGET,
            models: Vec::new(),
        }
    }
}

/// One dispatched tool call and its result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolTraceEntry {
    pub call_id: String,
    pub tool: String,
    pub arguments: Value,
    pub ok: bool,
    pub output: String,
    pub call_event_id: u64,
    pub result_event_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub session_id: String,
    pub text: String,
    pub tool_trace: Vec<ToolTraceEntry>,
    pub retrieved: Vec<RetrievedPassage>,
    /// Rounds of tool dispatch in this turn.
    pub iterations: usize,
    pub first_event_id: u64,
    pub last_event_id: u64,
}

struct Slot {
    busy: AtomicBool,
    state: Mutex<ChatSession>,
}

struct BusyGuard<'a>(&'a AtomicBool);

impl Drop for BusyGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

pub struct Orchestrator {
    config: OrchestratorConfig,
    model: Arc<dyn ChatModel>,
    repo: Arc<RepoSnapshot>,
    knowledge_base: Option<(Arc<DocIndex>, String)>,
    registry: ToolRegistry,
    audit: Arc<AuditLog>,
    sessions: RwLock<HashMap<String, Arc<Slot>>>,
    next_id: AtomicU64,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator")
            .field("config", &self.config)
            .field("tools", &self.registry.names())
            .finish_non_exhaustive()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Orchestrator {
    pub fn new(
        model: Arc<dyn ChatModel>,
        repo: Arc<RepoSnapshot>,
        audit: Arc<AuditLog>,
        config: OrchestratorConfig,
    ) -> Self {
        Self {
            config,
            model,
            repo,
            knowledge_base: None,
            registry: ToolRegistry::repository_tools(),
            audit,
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
        }
    }

    /// Attaches a read-only document index used for retrieval on every prompt.
    pub fn with_knowledge_base(mut self, index: Arc<DocIndex>, label: impl Into<String>) -> Self {
        self.knowledge_base = Some((index, label.into()));
        self
    }

    pub fn with_tools(mut self, registry: ToolRegistry) -> Self {
        self.registry = registry;
        self
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn config(&self) -> &OrchestratorConfig {
        &self.config
    }

    /// Starts a fresh chat instance. A generated id is used when `session_id` is `None`.
    pub fn create_session(
        &self,
        session_id: Option<&str>,
        model_id: &str,
        sampling: SamplingConfig,
    ) -> Result<ChatSession, OrchestratorError> {
        if model_id.trim().is_empty()
            || (!self.config.models.is_empty() && !self.config.models.iter().any(|m| m == model_id))
        {
            return Err(OrchestratorError::UnknownModel(model_id.to_string()));
        }
        sampling.validate()?;
        let session_id = match session_id {
            Some(id) => {
                self.audit.open_session(id)?;
                id.to_string()
            }
            None => loop {
                let n = self.next_id.fetch_add(1, Ordering::Relaxed);
                let id = format!("session-{}-{n:04}", chrono::Utc::now().format("%Y%m%dT%H%M%S"));
                match self.audit.open_session(&id) {
                    Ok(()) => break id,
                    Err(AuditError::SessionExists(_)) => continue,
                    Err(e) => return Err(e.into()),
                }
            },
        };
        let prompt = self
            .config
            .system_prompt
            .clone()
            .unwrap_or_else(|| system_prompt(self.config.language));
        let session = ChatSession {
            session_id: session_id.clone(),
            model_id: model_id.to_string(),
            sampling,
            messages: vec![ChatMessage::system(prompt)],
            tools: self.registry.names(),
            inventory_loaded: false,
            knowledge_base: self.knowledge_base.as_ref().map(|(_, label)| label.clone()),
            stripped_fields: Vec::new(),
            closed: false,
        };
        let slot = Arc::new(Slot {
            busy: AtomicBool::new(false),
            state: Mutex::new(session.clone()),
        });
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(session_id, slot);
        Ok(session)
    }

    fn slot(&self, session_id: &str) -> Result<Arc<Slot>, OrchestratorError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(session_id)
            .cloned()
            .ok_or_else(|| OrchestratorError::SessionNotFound(session_id.to_string()))
    }

    fn acquire<'a>(&self, session_id: &str, slot: &'a Slot) -> Result<BusyGuard<'a>, OrchestratorError> {
        if slot
            .busy
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .is_err()
        {
            return Err(OrchestratorError::SessionBusy(session_id.to_string()));
        }
        let guard = BusyGuard(&slot.busy);
        if slot.state.lock().expect("session poisoned").closed {
            return Err(OrchestratorError::SessionClosed(session_id.to_string()));
        }
        Ok(guard)
    }

    pub fn session(&self, session_id: &str) -> Result<ChatSession, OrchestratorError> {
        let slot = self.slot(session_id)?;
        let session = slot.state.lock().expect("session poisoned").clone();
        Ok(session)
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .sessions
            .read()
            .expect("session map poisoned")
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    pub fn is_busy(&self, session_id: &str) -> Result<bool, OrchestratorError> {
        Ok(self.slot(session_id)?.busy.load(Ordering::Acquire))
    }

    pub fn events(&self, session_id: &str) -> Result<Vec<AuditEvent>, OrchestratorError> {
        self.slot(session_id)?;
        Ok(self.audit.events(session_id)?)
    }

    fn record(&self, session_id: &str, payload: EventPayload) -> Result<u64, OrchestratorError> {
        Ok(self.audit.record(session_id, payload)?)
    }

    fn retrieve(&self, text: &str) -> Result<Vec<RetrievedPassage>, DocIndexError> {
        let Some((index, _)) = &self.knowledge_base else {
            return Ok(Vec::new());
        };
        let hits = match index.query(text, self.config.top_k) {
            Err(DocIndexError::EmptyIndex) => return Ok(Vec::new()),
            other => other?,
        };
        Ok(hits
            .into_iter()
            .map(|h| RetrievedPassage {
                chunk_id: h.chunk.chunk_id.clone(),
                source: h.chunk.source.clone(),
                ordinal: h.chunk.ordinal,
                score: h.score,
                text: h.chunk.text.clone(),
            })
            .collect())
    }

    /// Runs one user turn to completion.
    pub fn send_user_message(&self, session_id: &str, text: &str) -> Result<TurnOutcome, OrchestratorError> {
        let slot = self.slot(session_id)?;
        let _guard = self.acquire(session_id, &slot)?;

        let first_event_id = self.record(
            session_id,
            EventPayload::UserPrompt(UserPromptPayload { text: text.to_string() }),
        )?;
        slot.state
            .lock()
            .expect("session poisoned")
            .messages
            .push(ChatMessage::user(text));

        let retrieved = match self.retrieve(text) {
            Ok(r) => r,
            Err(e) => {
                self.record(
                    session_id,
                    EventPayload::Error(ErrorPayload {
                        stage: "retrieval".into(),
                        message: e.to_string(),
                        related_event_id: Some(first_event_id),
                        trace_ids: Vec::new(),
                    }),
                )?;
                return Err(OrchestratorError::Retrieval(e.to_string()));
            }
        };
        self.record(
            session_id,
            EventPayload::Retrieval(RetrievalPayload {
                query: text.to_string(),
                k: self.config.top_k,
                passages: retrieved.clone(),
            }),
        )?;

        let mut tool_trace = Vec::new();
        let mut iterations = 0usize;
        loop {
            let request = {
                let state = slot.state.lock().expect("session poisoned");
                assemble_request(&state, &self.registry, &retrieved)
            };
            let request_event = self.record_request(session_id, &request, &slot)?;
            let link = TraceLink {
                session_id: session_id.to_string(),
                event_id: request_event,
            };
            let (result, trace_ids) = with_trace_link(link, || self.model.complete(&request));
            let response = match result {
                Ok(r) => r,
                Err(e) => {
                    self.record(
                        session_id,
                        EventPayload::Error(ErrorPayload {
                            stage: "model".into(),
                            message: e.to_string(),
                            related_event_id: Some(request_event),
                            trace_ids,
                        }),
                    )?;
                    if request.min_p.is_some() && e.rejects_field("min_p") {
                        slot.state
                            .lock()
                            .expect("session poisoned")
                            .stripped_fields
                            .push("min_p".into());
                        continue;
                    }
                    return Err(e.into());
                }
            };
            let choice = &response.choices[0];
            let content = choice.message.content.clone().unwrap_or_default();
            let calls: Vec<ToolCall> = choice
                .message
                .tool_calls
                .iter()
                .flatten()
                .map(|c| ToolCall {
                    call_id: c.id.clone(),
                    tool_name: c.function.name.clone(),
                    arguments: c.function.arguments.clone(),
                })
                .collect();

            if calls.is_empty() {
                let last_event_id = self.record(
                    session_id,
                    EventPayload::ModelResponse(ModelResponsePayload {
                        content: content.clone(),
                        finish_reason: choice.finish_reason.clone(),
                        metadata: response.metadata.clone(),
                    }),
                )?;
                slot.state
                    .lock()
                    .expect("session poisoned")
                    .messages
                    .push(ChatMessage::assistant(content.clone(), Vec::new()));
                return Ok(TurnOutcome {
                    session_id: session_id.to_string(),
                    text: content,
                    tool_trace,
                    retrieved,
                    iterations,
                    first_event_id,
                    last_event_id,
                });
            }

            if iterations >= self.config.tool_loop_budget {
                let budget = self.config.tool_loop_budget;
                self.record(
                    session_id,
                    EventPayload::Error(ErrorPayload {
                        stage: "tool_loop".into(),
                        message: format!("model requested more tool calls after {budget} iterations"),
                        related_event_id: Some(request_event),
                        trace_ids: Vec::new(),
                    }),
                )?;
                return Err(OrchestratorError::ToolLoopBudgetExceeded { budget });
            }
            iterations += 1;
            slot.state
                .lock()
                .expect("session poisoned")
                .messages
                .push(ChatMessage::assistant(content, calls.clone()));
            for call in &calls {
                tool_trace.push(self.dispatch(session_id, &slot, call)?);
            }
        }
    }

    fn record_request(
        &self,
        session_id: &str,
        request: &ChatCompletionRequest,
        slot: &Slot,
    ) -> Result<u64, OrchestratorError> {
        let body = serde_json::to_vec(request).expect("request serializes");
        let stripped_fields = slot.state.lock().expect("session poisoned").stripped_fields.clone();
        self.record(
            session_id,
            EventPayload::ModelRequest(ModelRequestPayload {
                model: request.model.clone(),
                message_count: request.messages.len(),
                tools: request.tools.iter().map(|t| t.function.name.clone()).collect(),
                temperature: request.temperature.unwrap_or_default(),
                top_p: request.top_p.unwrap_or_default(),
                min_p: request.min_p,
                stripped_fields,
                request_sha256: sha256_hex(&body),
            }),
        )
    }

    /// Logs, executes and answers one call; the result message is appended to the session.
    fn dispatch(&self, session_id: &str, slot: &Slot, call: &ToolCall) -> Result<ToolTraceEntry, OrchestratorError> {
        let arguments = call.arguments_value();
        let call_event_id = self.record(
            session_id,
            EventPayload::ToolCall(ToolCallPayload {
                call_id: call.call_id.clone(),
                tool: call.tool_name.clone(),
                arguments: arguments.clone(),
            }),
        )?;
        let mut loaded = slot.state.lock().expect("session poisoned").inventory_loaded;
        let link = TraceLink {
            session_id: session_id.to_string(),
            event_id: call_event_id,
        };
        let (result, trace_ids) = with_trace_link(link, || execute(&self.registry, &self.repo, &mut loaded, call));
        let (ok, output) = match &result {
            Ok(value) => (true, ok_envelope(value)),
            Err(e) => (false, error_envelope(e)),
        };
        let result_event_id = self.record(
            session_id,
            EventPayload::ToolResult(ToolResultPayload {
                call_id: call.call_id.clone(),
                tool: call.tool_name.clone(),
                call_event_id,
                ok,
                output: output.clone(),
                trace_ids: trace_ids.clone(),
            }),
        )?;
        if let Err(e) = &result {
            if e.is_backend_failure() {
                self.record(
                    session_id,
                    EventPayload::Error(ErrorPayload {
                        stage: "tool".into(),
                        message: e.to_string(),
                        related_event_id: Some(call_event_id),
                        trace_ids,
                    }),
                )?;
            }
        }
        {
            let mut state = slot.state.lock().expect("session poisoned");
            state.inventory_loaded = loaded;
            state
                .messages
                .push(ChatMessage::tool(call.call_id.clone(), output.clone()));
        }
        Ok(ToolTraceEntry {
            call_id: call.call_id.clone(),
            tool: call.tool_name.clone(),
            arguments,
            ok,
            output,
            call_event_id,
            result_event_id,
        })
    }

    /// Executes a call outside a model turn, with the same logging as calls the model issues.
    pub fn execute_tool_call(&self, session_id: &str, call: &ToolCall) -> Result<ToolTraceEntry, OrchestratorError> {
        let slot = self.slot(session_id)?;
        let _guard = self.acquire(session_id, &slot)?;
        self.dispatch(session_id, &slot, call)
    }

    pub fn close_session(&self, session_id: &str) -> Result<(), OrchestratorError> {
        let slot = self.slot(session_id)?;
        let _guard = self.acquire(session_id, &slot)?;
        self.audit.close_session(session_id)?;
        slot.state.lock().expect("session poisoned").closed = true;
        Ok(())
    }

    pub fn export_run(&self, session_id: &str) -> Result<RunRecord, OrchestratorError> {
        Ok(self.audit.export_run(session_id)?)
    }
}
