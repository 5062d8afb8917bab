//! Evaluation matrix, run execution, defect annotation and reporting.

mod defects;
mod report;
mod runner;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use defects::{AnnotationError, AnnotationFile, AnnotationStore, DefectAnnotation, DefectCategory, Variant};
pub use report::{
    parse_report, summarize, CategorySummary, DefectCell, DefectRow, DefectTable, Entry, ParsedEntry, ReportError,
    Summary, SweepStats,
};
pub use runner::{Endpoint, HarnessError, RunStatus, Runner, RunnerEntry};

use crate::orchestrator::{SamplingConfig, SamplingPreset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Task1ShipModels,
    Task2BackgroundMusic,
}

impl TaskId {
    /// `task1` or `task2`, as used in run ids.
    pub fn short(self) -> &'static str {
        match self {
            TaskId::Task1ShipModels => "task1",
            TaskId::Task2BackgroundMusic => "task2",
        }
    }
}

const PROMPT_A1: &str = "Ships are currently rendered as boxes whose length corresponds to ship size. Add a 3D model representation that assigns models based on ship length. If no model exists for a given length (or if parameters change), revert to the box representation to keep the game functional.";
const PROMPT_B1: &str = "How can I implement background music in the game?";
const PROMPT_B2: &str = "How can I implement a way to enable or disable the background music independently of the sound effects? Use the class Menu.java.";

/// A task and the prompts issued for it, in order, within one chat.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskFixture {
    pub task_id: TaskId,
    pub prompts: Vec<String>,
}

impl TaskFixture {
    pub fn task1() -> Self {
        Self {
            task_id: TaskId::Task1ShipModels,
            prompts: vec![PROMPT_A1.to_string()],
        }
    }

    pub fn task2() -> Self {
        Self {
            task_id: TaskId::Task2BackgroundMusic,
            prompts: vec![PROMPT_B1.to_string(), PROMPT_B2.to_string()],
        }
    }

    pub fn both() -> Vec<Self> {
        vec![Self::task1(), Self::task2()]
    }

    /// Bundled scenario replayed for this task.
    pub fn replay_scenario(&self) -> &'static str {
        match self.task_id {
            TaskId::Task1ShipModels => "doc-only",
            TaskId::Task2BackgroundMusic => "menu-toggle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Sampling,
    Model,
}

impl std::str::FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sampling" => Ok(SweepKind::Sampling),
            "model" => Ok(SweepKind::Model),
            other => Err(format!("unknown sweep `{other}` (expected sampling or model)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {origin}: {reason}")]
    Parse { origin: String, reason: String },
    #[error("{origin}: {reason}")]
    Invalid { origin: String, reason: String },
}

fn read_fixture<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, FixtureError> {
    let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| FixtureError::Parse {
        origin: path.display().to_string(),
        reason: e.to_string(),
    })
}

const SAMPLING_CONFIGS: &str = include_str!("../../fixtures/sampling_configs.json");
const MODELS: &str = include_str!("../../fixtures/models.json");

/// Sampling configurations swept under one fixed model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSet {
    pub sweep_model: String,
    pub configurations: Vec<SamplingPreset>,
}

impl SamplingSet {
    /// The fifteen configurations of the sampling sweep.
    pub fn bundled() -> Self {
        let set: Self = serde_json::from_str(SAMPLING_CONFIGS).expect("bundled sampling fixture parses");
        set.validate("bundled sampling fixture")
            .expect("bundled sampling fixture is valid");
        set
    }

    pub fn load(path: &std::path::Path) -> Result<Self, FixtureError> {
        let set: Self = read_fixture(path)?;
        set.validate(&path.display().to_string())?;
        Ok(set)
    }

    fn validate(&self, origin: &str) -> Result<(), FixtureError> {
        let invalid = |reason: String| FixtureError::Invalid {
            origin: origin.to_string(),
            reason,
        };
        for c in &self.configurations {
            c.sampling
                .validate()
                .map_err(|e| invalid(format!("{}: {e}", c.label)))?;
        }
        let mut labels = HashSet::new();
        if let Some(dup) = self.configurations.iter().find(|c| !labels.insert(c.label.as_str())) {
            return Err(invalid(format!("label `{}` appears twice", dup.label)));
        }
        Ok(())
    }

    pub fn preset(&self, label: &str) -> Option<&SamplingPreset> {
        self.configurations.iter().find(|c| c.label == label)
    }

    /// Fixed-width listing, one configuration per line, grouped.
    pub fn render_text(&self) -> String {
        let width = self
            .configurations
            .iter()
            .map(|c| c.label.len())
            .max()
            .unwrap_or(0)
            .max(5);
        let mut out = format!("sweep model: {}\n\n", self.sweep_model);
        out.push_str(&format!("{:<3} {:<width$}  temp  top_p  min_p\n", "#", "label"));
        let mut group: Option<&str> = None;
        for (i, c) in self.configurations.iter().enumerate() {
            if group != Some(c.group.as_str()) {
                out.push_str(&format!("[{}]\n", c.group));
                group = Some(c.group.as_str());
            }
            let s = c.sampling;
            out.push_str(&format!(
                "{:<3} {:<width$}  {:<4}  {:<5}  {:?}\n",
                format!("{:02}", i + 1),
                c.label,
                format!("{:?}", s.temperature),
                format!("{:?}", s.top_p),
                s.min_p
            ));
        }
        out
    }
}

/// Models swept under one fixed sampling configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    pub sampling: SamplingPreset,
    pub models: Vec<String>,
}

impl ModelSet {
    /// The six models of the model sweep at (0.5, 0.95, 0.0).
    pub fn bundled() -> Self {
        let set: Self = serde_json::from_str(MODELS).expect("bundled model fixture parses");
        set.validate("bundled model fixture")
            .expect("bundled model fixture is valid");
        set
    }

    pub fn load(path: &std::path::Path) -> Result<Self, FixtureError> {
        let set: Self = read_fixture(path)?;
        set.validate(&path.display().to_string())?;
        Ok(set)
    }

    fn validate(&self, origin: &str) -> Result<(), FixtureError> {
        self.sampling.sampling.validate().map_err(|e| FixtureError::Invalid {
            origin: origin.to_string(),
            reason: e.to_string(),
        })
    }
}

/// Every preset a user can pick: the sampling sweep rows plus the model sweep setting.
pub fn sampling_presets() -> Vec<SamplingPreset> {
    let mut presets = SamplingSet::bundled().configurations;
    presets.push(ModelSet::bundled().sampling);
    presets
}

/// One chat instance of the evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub run_id: String,
    pub sweep: SweepKind,
    /// Report row: `sampling-NN` or `model-<id>`.
    pub row_key: String,
    /// Configuration label for sampling rows, the model id for model rows.
    pub row_label: String,
    /// Report grouping: the preset group for sampling rows, `model` for model rows.
    pub row_group: String,
    pub model_id: String,
    pub sampling: SamplingConfig,
    pub task: TaskFixture,
    /// Scenario answered by the scripted endpoint when the plan is replayed.
    pub scenario_binding: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatrixError {
    #[error("the {0} set is empty")]
    EmptySet(&'static str),
    #[error("no tasks given")]
    NoTasks,
    #[error("duplicate plan {run_id}")]
    DuplicatePlan { run_id: String },
}

/// Lowercased model id, used in run ids.
pub fn model_slug(model_id: &str) -> String {
    model_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c.to_ascii_lowercase()
            } else {
                '-'
            }
        })
        .collect()
}

/// Sampling plans first (configuration order), then model plans (set order),
/// each configuration or model paired with every task.
pub fn build_matrix(
    sampling_set: &SamplingSet,
    model_set: &ModelSet,
    tasks: &[TaskFixture],
) -> Result<Vec<RunPlan>, MatrixError> {
    if sampling_set.configurations.is_empty() {
        return Err(MatrixError::EmptySet("sampling"));
    }
    if model_set.models.is_empty() {
        return Err(MatrixError::EmptySet("model"));
    }
    if tasks.is_empty() {
        return Err(MatrixError::NoTasks);
    }
    let mut plans = Vec::with_capacity((sampling_set.configurations.len() + model_set.models.len()) * tasks.len());
    for (i, preset) in sampling_set.configurations.iter().enumerate() {
        let row_key = format!("sampling-{:02}", i + 1);
        for task in tasks {
            plans.push(RunPlan {
                run_id: format!("{row_key}-{}", task.task_id.short()),
                sweep: SweepKind::Sampling,
                row_key: row_key.clone(),
                row_label: preset.label.clone(),
                row_group: preset.group.clone(),
                model_id: sampling_set.sweep_model.clone(),
                sampling: preset.sampling,
                task: task.clone(),
                scenario_binding: task.replay_scenario().to_string(),
            });
        }
    }
    for model in &model_set.models {
        let row_key = format!("model-{}", model_slug(model));
        for task in tasks {
            plans.push(RunPlan {
                run_id: format!("{row_key}-{}", task.task_id.short()),
                sweep: SweepKind::Model,
                row_key: row_key.clone(),
                row_label: model.clone(),
                row_group: model_set.sampling.group.clone(),
                model_id: model.clone(),
                sampling: model_set.sampling.sampling,
                task: task.clone(),
                scenario_binding: task.replay_scenario().to_string(),
            });
        }
    }
    let mut run_ids = HashSet::new();
    let mut combos = HashSet::new();
    for p in &plans {
        let s = p.sampling;
        let combo = (
            p.model_id.clone(),
            s.temperature.to_bits(),
            s.top_p.to_bits(),
            s.min_p.to_bits(),
            p.task.task_id,
        );
        if !run_ids.insert(p.run_id.clone()) || !combos.insert(combo) {
            return Err(MatrixError::DuplicatePlan {
                run_id: p.run_id.clone(),
            });
        }
    }
    Ok(plans)
}

/// The full evaluation matrix with the bundled fixtures.
pub fn bundled_matrix() -> Vec<RunPlan> {
    build_matrix(&SamplingSet::bundled(), &ModelSet::bundled(), &TaskFixture::both()).expect("bundled matrix is valid")
}
