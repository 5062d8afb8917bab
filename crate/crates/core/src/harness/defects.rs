use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RunPlan, SweepKind, TaskId};

/// The twelve defect categories, in catalog order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectCategory {
    Hallucination,
    ToolMisuse,
    TaskMisunderstanding,
    InsufficientRobustness,
    UseBeforeInitialization,
    DuplicateVariableDeclaration,
    MissingResourceEntry,
    TypeMismatchedComparison,
    InvalidInvocation,
    IntegrationOmission,
    WrapperOnlyMethod,
    CodeDuplication,
}

impl DefectCategory {
    pub const ALL: [DefectCategory; 12] = [
        DefectCategory::Hallucination,
        DefectCategory::ToolMisuse,
        DefectCategory::TaskMisunderstanding,
        DefectCategory::InsufficientRobustness,
        DefectCategory::UseBeforeInitialization,
        DefectCategory::DuplicateVariableDeclaration,
        DefectCategory::MissingResourceEntry,
        DefectCategory::TypeMismatchedComparison,
        DefectCategory::InvalidInvocation,
        DefectCategory::IntegrationOmission,
        DefectCategory::WrapperOnlyMethod,
        DefectCategory::CodeDuplication,
    ];

    /// 1-based catalog number.
    pub fn number(self) -> usize {
        Self::ALL.iter().position(|c| *c == self).expect("listed") + 1
    }

    pub fn label(self) -> &'static str {
        match self {
            DefectCategory::Hallucination => "Hallucination",
            DefectCategory::ToolMisuse => "Tool misuse",
            DefectCategory::TaskMisunderstanding => "Task misunderstanding",
            DefectCategory::InsufficientRobustness => "Insufficient robustness",
            DefectCategory::UseBeforeInitialization => "Use-before-initialization",
            DefectCategory::DuplicateVariableDeclaration => "Duplicate variable declaration",
            DefectCategory::MissingResourceEntry => "Missing resource entry",
            DefectCategory::TypeMismatchedComparison => "Type-mismatched comparison",
            DefectCategory::InvalidInvocation => "Invalid invocation",
            DefectCategory::IntegrationOmission => "Integration omission",
            DefectCategory::WrapperOnlyMethod => "Wrapper-only method",
            DefectCategory::CodeDuplication => "Code duplication",
        }
    }

    /// Whether the catalog defines case variants a and b for this category.
    pub fn has_variants(self) -> bool {
        matches!(
            self,
            DefectCategory::Hallucination
                | DefectCategory::ToolMisuse
                | DefectCategory::InsufficientRobustness
                | DefectCategory::UseBeforeInitialization
        )
    }
}

impl std::str::FromStr for DefectCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Self::ALL
            .iter()
            .copied()
            .find(|c| {
                serde_json::to_value(c)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .as_deref()
                    == Some(wanted.as_str())
                    || c.number().to_string() == wanted
            })
            .ok_or_else(|| format!("unknown defect category `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    A,
    B,
}

impl Variant {
    pub fn letter(self) -> char {
        match self {
            Variant::A => 'a',
            Variant::B => 'b',
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" => Ok(Variant::A),
            "b" => Ok(Variant::B),
            other => Err(format!("unknown variant `{other}` (expected a or b)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectAnnotation {
    pub run_id: String,
    pub task_id: TaskId,
    pub category: DefectCategory,
    pub variant: Option<Variant>,
    pub count: u32,
    #[serde(default)]
    pub note: String,
}

impl DefectAnnotation {
    pub fn validate(&self) -> Result<(), AnnotationError> {
        if self.variant.is_some() && !self.category.has_variants() {
            return Err(AnnotationError::IllegalVariant {
                category: self.category,
            });
        }
        if self.count == 0 {
            return Err(AnnotationError::ZeroCount);
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("category `{}` has no case variants", category.label())]
    IllegalVariant { category: DefectCategory },
    #[error("count must be at least 1")]
    ZeroCount,
    #[error("unknown run `{0}`")]
    UnknownRun(String),
    #[error("run `{run_id}` belongs to {expected:?}, annotation names {given:?}")]
    TaskMismatch {
        run_id: String,
        expected: TaskId,
        given: TaskId,
    },
    #[error("annotation is for `{given}`, not `{run_id}`")]
    RunMismatch { run_id: String, given: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {origin}: {reason}")]
    Parse { origin: String, reason: String },
}

/// On-disk form of an annotation set.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnnotationFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepKind>,
    pub annotations: Vec<DefectAnnotation>,
}

const SAMPLING_ANNOTATIONS: &str = include_str!("../../fixtures/sampling_annotations.json");
const MODEL_ANNOTATIONS: &str = include_str!("../../fixtures/model_annotations.json");

impl AnnotationFile {
    pub fn parse(origin: &str, text: &str) -> Result<Self, AnnotationError> {
        serde_json::from_str(text).map_err(|e| AnnotationError::Parse {
            origin: origin.to_string(),
            reason: e.to_string(),
        })
    }

    /// Annotations transcribed from the sampling sweep results.
    pub fn sampling_fixture() -> Self {
        Self::parse("sampling_annotations.json", SAMPLING_ANNOTATIONS).expect("bundled fixture parses")
    }

    /// Annotations transcribed from the model sweep results.
    pub fn model_fixture() -> Self {
        Self::parse("model_annotations.json", MODEL_ANNOTATIONS).expect("bundled fixture parses")
    }
}

/// Validated annotations against a known set of runs. Writes are serialized
/// by `&mut self`; a backing file, if any, is rewritten after every add.
#[derive(Debug)]
pub struct AnnotationStore {
    runs: HashMap<String, TaskId>,
    annotations: Vec<DefectAnnotation>,
    path: Option<PathBuf>,
}

impl AnnotationStore {
    pub fn new(plans: &[RunPlan]) -> Self {
        Self {
            runs: plans.iter().map(|p| (p.run_id.clone(), p.task.task_id)).collect(),
            annotations: Vec::new(),
            path: None,
        }
    }

    /// Opens (or starts) a store file; existing annotations are validated.
    pub fn open(plans: &[RunPlan], path: &Path) -> Result<Self, AnnotationError> {
        let mut store = Self::new(plans);
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|source| AnnotationError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let file = AnnotationFile::parse(&path.display().to_string(), &text)?;
            for a in file.annotations {
                let run_id = a.run_id.clone();
                store.annotate(&run_id, a)?;
            }
        }
        store.path = Some(path.to_path_buf());
        Ok(store)
    }

    pub fn from_file(plans: &[RunPlan], file: &AnnotationFile) -> Result<Self, AnnotationError> {
        let mut store = Self::new(plans);
        for a in &file.annotations {
            store.annotate(&a.run_id, a.clone())?;
        }
        Ok(store)
    }

    pub fn annotate(
        &mut self,
        run_id: &str,
        annotation: DefectAnnotation,
    ) -> Result<&DefectAnnotation, AnnotationError> {
        if annotation.run_id != run_id {
            return Err(AnnotationError::RunMismatch {
                run_id: run_id.to_string(),
                given: annotation.run_id,
            });
        }
        let expected = *self
            .runs
            .get(run_id)
            .ok_or_else(|| AnnotationError::UnknownRun(run_id.to_string()))?;
        if expected != annotation.task_id {
            return Err(AnnotationError::TaskMismatch {
                run_id: run_id.to_string(),
                expected,
                given: annotation.task_id,
            });
        }
        annotation.validate()?;
        self.annotations.push(annotation);
        if let Some(path) = &self.path {
            let file = AnnotationFile {
                sweep: None,
                annotations: self.annotations.clone(),
            };
            let text = serde_json::to_string_pretty(&file).expect("annotations serialize");
            std::fs::write(path, text + "\n").map_err(|source| AnnotationError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        Ok(self.annotations.last().expect("just pushed"))
    }

    pub fn annotations(&self) -> &[DefectAnnotation] {
        &self.annotations
    }
}
