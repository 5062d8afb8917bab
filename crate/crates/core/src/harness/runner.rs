use std::collections::HashSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{RunPlan, TaskId};
use crate::audit::{AuditError, AuditLog, Clock, RunRecord, TraceStore};
use crate::docs::DocIndex;
use crate::orchestrator::{HttpChatModel, Orchestrator, OrchestratorConfig, OrchestratorError, SamplingConfig};
use crate::repo::RepoSnapshot;

const COMPLETED_LEDGER: &str = "completed-runs.jsonl";

/// Where a run's chat completions go.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// A scripted server; each plan is pinned to its bound scenario and
    /// ledgers use the frozen replay clock.
    Replay { base_url: String },
    /// An OpenAI-compatible server used as-is.
    Live { base_url: String },
}

impl Endpoint {
    pub fn model_url(&self, plan: &RunPlan) -> String {
        match self {
            Endpoint::Replay { base_url } => {
                format!("{}/scenarios/{}", base_url.trim_end_matches('/'), plan.scenario_binding)
            }
            Endpoint::Live { base_url } => base_url.trim_end_matches('/').to_string(),
        }
    }

    fn clock(&self) -> Clock {
        match self {
            Endpoint::Replay { .. } => Clock::replay(),
            Endpoint::Live { .. } => Clock::Real,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

/// One line of the completed-run ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunnerEntry {
    pub run_id: String,
    pub status: RunStatus,
    pub model_id: String,
    pub sampling: SamplingConfig,
    pub task_id: TaskId,
    pub endpoint: String,
    pub turns_completed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<RunRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("run `{run_id}` was already executed ({status:?}); runs are never repeated")]
    AlreadyExecuted { run_id: String, status: RunStatus },
    #[error("run `{run_id}` is executing")]
    InFlight { run_id: String },
    #[error("run `{run_id}` failed: {source}")]
    RunFailed {
        run_id: String,
        #[source]
        source: OrchestratorError,
    },
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {reason}")]
    Ledger { path: String, line: usize, reason: String },
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

struct LedgerState {
    entries: Vec<RunnerEntry>,
    in_flight: HashSet<String>,
}

/// Executes plans once each. Every run gets its own orchestrator, a ledger at
/// `{runs_dir}/{run_id}.jsonl` and raw traces in `{runs_dir}/{run_id}/traces/`.
pub struct Runner {
    runs_dir: PathBuf,
    repo: Arc<RepoSnapshot>,
    knowledge_base: Option<(Arc<DocIndex>, String)>,
    config: OrchestratorConfig,
    traces: Arc<TraceStore>,
    state: Mutex<LedgerState>,
}

impl std::fmt::Debug for Runner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runner")
            .field("runs_dir", &self.runs_dir)
            .finish_non_exhaustive()
    }
}

impl Runner {
    /// Opens `runs_dir`, reading any completed-run ledger already there.
    pub fn open(runs_dir: impl Into<PathBuf>, repo: Arc<RepoSnapshot>) -> Result<Self, HarnessError> {
        let runs_dir = runs_dir.into();
        std::fs::create_dir_all(&runs_dir).map_err(|e| io_err(&runs_dir, e))?;
        let ledger = runs_dir.join(COMPLETED_LEDGER);
        let mut entries = Vec::new();
        if ledger.exists() {
            let text = std::fs::read_to_string(&ledger).map_err(|e| io_err(&ledger, e))?;
            for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let entry: RunnerEntry = serde_json::from_str(line).map_err(|e| HarnessError::Ledger {
                    path: ledger.display().to_string(),
                    line: n + 1,
                    reason: e.to_string(),
                })?;
                entries.push(entry);
            }
        }
        Ok(Self {
            traces: Arc::new(TraceStore::new(&runs_dir)),
            runs_dir,
            repo,
            knowledge_base: None,
            config: OrchestratorConfig::default(),
            state: Mutex::new(LedgerState {
                entries,
                in_flight: HashSet::new(),
            }),
        })
    }

    pub fn with_knowledge_base(mut self, index: Arc<DocIndex>, label: impl Into<String>) -> Self {
        self.knowledge_base = Some((index, label.into()));
        self
    }

    pub fn with_config(mut self, config: OrchestratorConfig) -> Self {
        self.config = config;
        self
    }

    pub fn runs_dir(&self) -> &Path {
        &self.runs_dir
    }

    pub fn entries(&self) -> Vec<RunnerEntry> {
        self.state.lock().expect("runner state poisoned").entries.clone()
    }

    pub fn entry(&self, run_id: &str) -> Option<RunnerEntry> {
        self.entries().into_iter().find(|e| e.run_id == run_id)
    }

    fn reserve(&self, run_id: &str) -> Result<(), HarnessError> {
        let mut state = self.state.lock().expect("runner state poisoned");
        if let Some(done) = state.entries.iter().find(|e| e.run_id == run_id) {
            return Err(HarnessError::AlreadyExecuted {
                run_id: run_id.to_string(),
                status: done.status,
            });
        }
        if !state.in_flight.insert(run_id.to_string()) {
            return Err(HarnessError::InFlight {
                run_id: run_id.to_string(),
            });
        }
        Ok(())
    }

    fn settle(&self, entry: RunnerEntry) -> Result<RunnerEntry, HarnessError> {
        let mut state = self.state.lock().expect("runner state poisoned");
        state.in_flight.remove(&entry.run_id);
        let ledger = self.runs_dir.join(COMPLETED_LEDGER);
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&ledger)
            .map_err(|e| io_err(&ledger, e))?;
        let mut line = serde_json::to_vec(&entry).expect("runner entry serializes");
        line.push(b'\n');
        file.write_all(&line)
            .and_then(|_| file.sync_data())
            .map_err(|e| io_err(&ledger, e))?;
        state.entries.push(entry.clone());
        Ok(entry)
    }

    fn release(&self, run_id: &str) {
        self.state
            .lock()
            .expect("runner state poisoned")
            .in_flight
            .remove(run_id);
    }

    /// Runs one plan in a fresh session: the task's prompts in order, then
    /// close and export. A failing turn marks the run failed; it is never retried.
    pub fn execute_plan(&self, plan: &RunPlan, endpoint: &Endpoint) -> Result<RunnerEntry, HarnessError> {
        self.reserve(&plan.run_id)?;
        let audit = match AuditLog::new(&self.runs_dir, endpoint.clock()) {
            Ok(a) => Arc::new(a),
            Err(e) => {
                self.release(&plan.run_id);
                return Err(e.into());
            }
        };
        let model_url = endpoint.model_url(plan);
        let model = HttpChatModel::new(&model_url).with_sink(self.traces.clone());
        let mut orchestrator = Orchestrator::new(Arc::new(model), Arc::clone(&self.repo), audit, self.config.clone());
        if let Some((index, label)) = &self.knowledge_base {
            orchestrator = orchestrator.with_knowledge_base(Arc::clone(index), label.clone());
        }
        if let Err(e) = orchestrator.create_session(Some(&plan.run_id), &plan.model_id, plan.sampling) {
            self.release(&plan.run_id);
            return Err(e.into());
        }

        let mut turns_completed = 0;
        let mut failure = None;
        for prompt in &plan.task.prompts {
            match orchestrator.send_user_message(&plan.run_id, prompt) {
                Ok(_) => turns_completed += 1,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        let run = orchestrator
            .close_session(&plan.run_id)
            .and_then(|_| orchestrator.export_run(&plan.run_id));
        let run = match (run, &failure) {
            (Ok(r), _) => Some(r),
            (Err(_), Some(_)) => None,
            (Err(e), None) => {
                failure = Some(e);
                None
            }
        };
        let entry = RunnerEntry {
            run_id: plan.run_id.clone(),
            status: if failure.is_some() {
                RunStatus::Failed
            } else {
                RunStatus::Completed
            },
            model_id: plan.model_id.clone(),
            sampling: plan.sampling,
            task_id: plan.task.task_id,
            endpoint: model_url,
            turns_completed,
            run,
            error: failure.as_ref().map(ToString::to_string),
        };
        let entry = self.settle(entry)?;
        match failure {
            Some(source) => Err(HarnessError::RunFailed {
                run_id: plan.run_id.clone(),
                source,
            }),
            None => Ok(entry),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::{import_run, AuditKind};
    use crate::harness::bundled_matrix;
    use crate::scripted::{Scenario, ScriptedServer};

    fn fixture_repo() -> Arc<RepoSnapshot> {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/repo");
        Arc::new(RepoSnapshot::local(root, "main"))
    }

    #[test]
    fn task2_replay_runs_once() {
        let server = ScriptedServer::start(Scenario::bundled(), "127.0.0.1:0").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let runner = Runner::open(dir.path(), fixture_repo()).unwrap();
        let plan = bundled_matrix()
            .into_iter()
            .find(|p| p.run_id == "sampling-01-task2")
            .unwrap();
        let endpoint = Endpoint::Replay { base_url: server.url() };
        let entry = runner.execute_plan(&plan, &endpoint).unwrap();
        assert_eq!(entry.status, RunStatus::Completed);
        assert_eq!(entry.turns_completed, 2);
        let events = import_run(&entry.run.as_ref().unwrap().path).unwrap();
        let prompts: Vec<&str> = events
            .iter()
            .filter(|e| e.kind == AuditKind::UserPrompt)
            .map(|e| e.payload["text"].as_str().unwrap())
            .collect();
        assert_eq!(
            prompts,
            plan.task.prompts.iter().map(String::as_str).collect::<Vec<_>>()
        );

        assert!(matches!(
            runner.execute_plan(&plan, &endpoint),
            Err(HarnessError::AlreadyExecuted {
                status: RunStatus::Completed,
                ..
            })
        ));
        let reopened = Runner::open(dir.path(), fixture_repo()).unwrap();
        assert!(matches!(
            reopened.execute_plan(&plan, &endpoint),
            Err(HarnessError::AlreadyExecuted { .. })
        ));
    }

    #[test]
    fn unreachable_endpoint_marks_the_run_failed() {
        let dir = tempfile::tempdir().unwrap();
        let runner = Runner::open(dir.path(), fixture_repo()).unwrap();
        let plan = bundled_matrix()
            .into_iter()
            .find(|p| p.run_id == "model-mistral-7b-instruct-v0.3-task1")
            .unwrap();
        let endpoint = Endpoint::Live {
            base_url: "http://127.0.0.1:9".into(),
        };
        assert!(matches!(
            runner.execute_plan(&plan, &endpoint),
            Err(HarnessError::RunFailed { .. })
        ));
        let entry = runner.entry(&plan.run_id).unwrap();
        assert_eq!(entry.status, RunStatus::Failed);
        assert_eq!(entry.turns_completed, 0);
        assert!(entry.run.is_some());
        assert!(matches!(
            runner.execute_plan(&plan, &endpoint),
            Err(HarnessError::AlreadyExecuted {
                status: RunStatus::Failed,
                ..
            })
        ));
    }
}
