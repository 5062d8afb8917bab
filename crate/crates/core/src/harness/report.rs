use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::defects::{DefectAnnotation, DefectCategory, Variant};
use super::{RunPlan, SweepKind, TaskId};
use crate::orchestrator::SamplingConfig;

/// One rendered occurrence: a case variant (or none) with a repeat count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entry {
    pub variant: Option<Variant>,
    pub count: u32,
}

impl Entry {
    fn sort_key(&self) -> (u8, u32) {
        let v = match self.variant {
            Some(Variant::A) => 0,
            Some(Variant::B) => 1,
            None => 2,
        };
        (v, self.count)
    }

    /// `a`, `b x2`, `x`, `x3`.
    pub fn render(&self) -> String {
        match (self.variant, self.count) {
            (Some(v), 1) => v.letter().to_string(),
            (Some(v), n) => format!("{} x{n}", v.letter()),
            (None, 1) => "x".to_string(),
            (None, n) => format!("x{n}"),
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        let (variant, rest) = match text.split_once(' ') {
            Some((letter, rest)) => (Some(letter.parse::<Variant>().ok()?), Some(rest.trim())),
            None => match text {
                "a" | "b" => (Some(text.parse::<Variant>().ok()?), None),
                _ => (None, Some(text)),
            },
        };
        let count = match rest {
            None => 1,
            Some(r) => {
                let digits = r.strip_prefix('x')?;
                if digits.is_empty() {
                    if variant.is_some() {
                        return None;
                    }
                    1
                } else {
                    let n: u32 = digits.parse().ok()?;
                    if n < 2 || digits.starts_with('0') {
                        return None;
                    }
                    n
                }
            }
        };
        Some(Self { variant, count })
    }
}

fn render_entries(entries: &[Entry]) -> String {
    entries.iter().map(Entry::render).collect::<Vec<_>>().join(", ")
}

/// Entries for one category, split by task.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectCell {
    pub task1: Vec<Entry>,
    pub task2: Vec<Entry>,
}

impl DefectCell {
    pub fn is_empty(&self) -> bool {
        self.task1.is_empty() && self.task2.is_empty()
    }

    fn push(&mut self, task: TaskId, entry: Entry) {
        let side = match task {
            TaskId::Task1ShipModels => &mut self.task1,
            TaskId::Task2BackgroundMusic => &mut self.task2,
        };
        side.push(entry);
        side.sort_by_key(Entry::sort_key);
    }

    /// `task1 / task2`; `-` marks an empty side, an empty cell renders as nothing.
    pub fn render(&self) -> String {
        if self.is_empty() {
            return String::new();
        }
        let side = |e: &[Entry]| {
            if e.is_empty() {
                "-".to_string()
            } else {
                render_entries(e)
            }
        };
        format!("{} / {}", side(&self.task1), side(&self.task2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectRow {
    pub row_key: String,
    pub label: String,
    pub group: String,
    pub sampling: SamplingConfig,
    /// Indexed like `DefectCategory::ALL`.
    pub cells: Vec<DefectCell>,
}

impl DefectRow {
    pub fn cell(&self, category: DefectCategory) -> &DefectCell {
        &self.cells[category.number() - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectTable {
    pub sweep: SweepKind,
    pub rows: Vec<DefectRow>,
}

const LABEL_SAMPLING: &str = "Configuration";
const LABEL_MODEL: &str = "Model";

impl DefectTable {
    /// Rows come from the plans of `sweep`: plan order for sampling rows,
    /// alphabetical by model id for model rows. Annotations on runs outside
    /// the sweep are ignored.
    pub fn build(sweep: SweepKind, plans: &[RunPlan], annotations: &[DefectAnnotation]) -> Self {
        let mut rows: Vec<DefectRow> = Vec::new();
        let mut run_rows: HashMap<&str, usize> = HashMap::new();
        for plan in plans.iter().filter(|p| p.sweep == sweep) {
            let index = match rows.iter().position(|r| r.row_key == plan.row_key) {
                Some(i) => i,
                None => {
                    rows.push(DefectRow {
                        row_key: plan.row_key.clone(),
                        label: plan.row_label.clone(),
                        group: plan.row_group.clone(),
                        sampling: plan.sampling,
                        cells: vec![DefectCell::default(); DefectCategory::ALL.len()],
                    });
                    rows.len() - 1
                }
            };
            run_rows.insert(plan.run_id.as_str(), index);
        }
        for a in annotations {
            if let Some(&i) = run_rows.get(a.run_id.as_str()) {
                rows[i].cells[a.category.number() - 1].push(
                    a.task_id,
                    Entry {
                        variant: a.variant,
                        count: a.count,
                    },
                );
            }
        }
        if sweep == SweepKind::Model {
            rows.sort_by(|a, b| a.label.cmp(&b.label));
        }
        Self { sweep, rows }
    }

    pub fn row(&self, label: &str) -> Option<&DefectRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    fn header(&self) -> Vec<String> {
        let mut header = match self.sweep {
            SweepKind::Sampling => vec![
                LABEL_SAMPLING.to_string(),
                "temp".into(),
                "top_p".into(),
                "min_p".into(),
            ],
            SweepKind::Model => vec![LABEL_MODEL.to_string()],
        };
        header.extend(DefectCategory::ALL.iter().map(|c| c.number().to_string()));
        header
    }

    fn row_cells(&self, row: &DefectRow) -> Vec<String> {
        let mut cells = vec![row.label.clone()];
        if self.sweep == SweepKind::Sampling {
            let s = row.sampling;
            cells.extend([
                format!("{:?}", s.temperature),
                format!("{:?}", s.top_p),
                format!("{:?}", s.min_p),
            ]);
        }
        cells.extend(row.cells.iter().map(DefectCell::render));
        cells
    }

    /// Padded pipe table followed by a category legend.
    pub fn render_text(&self) -> String {
        let header = self.header();
        let body: Vec<Vec<String>> = self.rows.iter().map(|r| self.row_cells(r)).collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count()).max(1);
            }
        }
        let line = |cells: &[String]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}", w = *w))
                .collect();
            format!("| {} |\n", padded.join(" | "))
        };
        let mut out = String::new();
        out.push_str(match self.sweep {
            SweepKind::Sampling => "Sampling sweep\n\n",
            SweepKind::Model => "Model sweep\n\n",
        });
        out.push_str(&line(&header));
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
        let mut group: Option<&str> = None;
        for (row, cells) in self.rows.iter().zip(&body) {
            if self.sweep == SweepKind::Sampling && group != Some(row.group.as_str()) {
                out.push_str(&format!("| {} |\n", row.group));
                group = Some(row.group.as_str());
            }
            out.push_str(&line(cells));
        }
        out.push_str("\nCells read `task1 / task2`; `-` marks a task without entries.\n");
        for c in DefectCategory::ALL {
            out.push_str(&format!("{:>2}  {}\n", c.number(), c.label()));
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["row", "label", "group", "temperature", "top_p", "min_p"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(DefectCategory::ALL.iter().map(|c| {
            serde_json::to_value(c)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default()
        }));
        writer.write_record(&header).expect("in-memory csv write");
        for row in &self.rows {
            let s = row.sampling;
            let mut record = vec![
                row.row_key.clone(),
                row.label.clone(),
                row.group.clone(),
                format!("{:?}", s.temperature),
                format!("{:?}", s.top_p),
                format!("{:?}", s.min_p),
            ];
            record.extend(row.cells.iter().map(DefectCell::render));
            writer.write_record(&record).expect("in-memory csv write");
        }
        String::from_utf8(writer.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }
}

/// One entry recovered from a rendered table.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParsedEntry {
    pub run_id: String,
    pub task_id: TaskId,
    pub category: DefectCategory,
    pub variant: Option<Variant>,
    pub count: u32,
}

impl From<&DefectAnnotation> for ParsedEntry {
    fn from(a: &DefectAnnotation) -> Self {
        Self {
            run_id: a.run_id.clone(),
            task_id: a.task_id,
            category: a.category,
            variant: a.variant,
            count: a.count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("no planned row labelled `{0}`")]
    UnknownRow(String),
    #[error("no table header found")]
    MissingHeader,
}

fn split_row(line: &str) -> Option<Vec<String>> {
    let inner = line.trim().strip_prefix('|')?.strip_suffix('|')?;
    Some(inner.split('|').map(|c| c.trim().to_string()).collect())
}

fn parse_side(text: &str, line: usize) -> Result<Vec<Entry>, ReportError> {
    if text == "-" {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| {
            Entry::parse(t).ok_or_else(|| ReportError::Malformed {
                line,
                reason: format!("bad entry `{}`", t.trim()),
            })
        })
        .collect()
}

/// Reads a text rendering back into entries, mapping rows to run ids through `plans`.
pub fn parse_report(text: &str, plans: &[RunPlan]) -> Result<Vec<ParsedEntry>, ReportError> {
    let mut header: Option<(SweepKind, Vec<(usize, DefectCategory)>)> = None;
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let Some(cells) = split_row(raw) else { continue };
        if cells.len() == 1 || cells.iter().all(|c| !c.is_empty() && c.chars().all(|ch| ch == '-')) {
            continue;
        }
        let Some((sweep, columns)) = &header else {
            let sweep = match cells[0].as_str() {
                LABEL_SAMPLING => SweepKind::Sampling,
                LABEL_MODEL => SweepKind::Model,
                other => {
                    return Err(ReportError::Malformed {
                        line: line_no,
                        reason: format!("unexpected header `{other}`"),
                    })
                }
            };
            let mut columns = Vec::new();
            for (i, c) in cells.iter().enumerate() {
                if let Ok(number) = c.parse::<usize>() {
                    let category = DefectCategory::ALL
                        .get(number.wrapping_sub(1))
                        .copied()
                        .ok_or_else(|| ReportError::Malformed {
                            line: line_no,
                            reason: format!("no category {number}"),
                        })?;
                    columns.push((i, category));
                }
            }
            header = Some((sweep, columns));
            continue;
        };
        let plan_for = |task: TaskId| {
            plans
                .iter()
                .find(|p| p.sweep == *sweep && p.row_label == cells[0] && p.task.task_id == task)
                .map(|p| p.run_id.clone())
        };
        if !plans.iter().any(|p| p.sweep == *sweep && p.row_label == cells[0]) {
            return Err(ReportError::UnknownRow(cells[0].clone()));
        }
        for (index, category) in columns {
            let cell = cells.get(*index).ok_or_else(|| ReportError::Malformed {
                line: line_no,
                reason: "row is shorter than the header".into(),
            })?;
            if cell.is_empty() {
                continue;
            }
            let (t1, t2) = cell.split_once(" / ").ok_or_else(|| ReportError::Malformed {
                line: line_no,
                reason: format!("cell `{cell}` lacks a task separator"),
            })?;
            for (task, side) in [(TaskId::Task1ShipModels, t1), (TaskId::Task2BackgroundMusic, t2)] {
                let entries = parse_side(side.trim(), line_no)?;
                if entries.is_empty() {
                    continue;
                }
                let run_id = plan_for(task)
                    .ok_or_else(|| ReportError::UnknownRow(format!("{} ({})", cells[0], task.short())))?;
                out.extend(entries.into_iter().map(|e| ParsedEntry {
                    run_id: run_id.clone(),
                    task_id: task,
                    category: *category,
                    variant: e.variant,
                    count: e.count,
                }));
            }
        }
    }
    if header.is_none() {
        return Err(ReportError::MissingHeader);
    }
    Ok(out)
}

/// Occurrence figures of one category within one sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepStats {
    /// Configurations or models with at least one entry.
    pub rows_affected: usize,
    pub rows_total: usize,
    pub runs_affected: usize,
    pub total_count: u32,
    pub task1_count: u32,
    pub task2_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub category: DefectCategory,
    pub sampling: SweepStats,
    pub model: SweepStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub categories: Vec<CategorySummary>,
}

impl Summary {
    pub fn category(&self, category: DefectCategory) -> &CategorySummary {
        &self.categories[category.number() - 1]
    }

    pub fn render_text(&self) -> String {
        let fmt = |s: &SweepStats| {
            format!(
                "{:>2}/{:<2}  {:>4}  {:>5}  {:>3}/{:<3}",
                s.rows_affected, s.rows_total, s.runs_affected, s.total_count, s.task1_count, s.task2_count
            )
        };
        let mut out = format!(
            "{:<30}  {:<27}  {}\n{:<30}  {:<27}  {}\n",
            "", "sampling sweep", "model sweep", "category", "rows   runs  count  t1/t2", "rows   runs  count  t1/t2"
        );
        for c in &self.categories {
            let line = format!(
                "{:<30}  {:<27}  {}",
                c.category.label(),
                fmt(&c.sampling),
                fmt(&c.model)
            );
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

/// Per-category frequencies. Annotations on runs missing from `plans` are not counted.
pub fn summarize(annotations: &[DefectAnnotation], plans: &[RunPlan]) -> Summary {
    let by_run: HashMap<&str, &RunPlan> = plans.iter().map(|p| (p.run_id.as_str(), p)).collect();
    let rows_total = |sweep: SweepKind| {
        plans
            .iter()
            .filter(|p| p.sweep == sweep)
            .map(|p| p.row_key.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    };
    let totals = (rows_total(SweepKind::Sampling), rows_total(SweepKind::Model));
    let categories = DefectCategory::ALL
        .iter()
        .map(|&category| {
            let stats = |sweep: SweepKind, rows_total: usize| {
                let mut rows = BTreeSet::new();
                let mut runs = BTreeSet::new();
                let mut s = SweepStats {
                    rows_total,
                    ..SweepStats::default()
                };
                for a in annotations.iter().filter(|a| a.category == category) {
                    let Some(plan) = by_run.get(a.run_id.as_str()).filter(|p| p.sweep == sweep) else {
                        continue;
                    };
                    rows.insert(plan.row_key.as_str());
                    runs.insert(plan.run_id.as_str());
                    s.total_count += a.count;
                    match a.task_id {
                        TaskId::Task1ShipModels => s.task1_count += a.count,
                        TaskId::Task2BackgroundMusic => s.task2_count += a.count,
                    }
                }
                s.rows_affected = rows.len();
                s.runs_affected = runs.len();
                s
            };
            CategorySummary {
                category,
                sampling: stats(SweepKind::Sampling, totals.0),
                model: stats(SweepKind::Model, totals.1),
            }
        })
        .collect();
    Summary { categories }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{bundled_matrix, AnnotationFile};

    #[test]
    fn entry_grammar() {
        let cases = [
            (Some(Variant::A), 1, "a"),
            (Some(Variant::B), 2, "b x2"),
            (None, 1, "x"),
            (None, 3, "x3"),
        ];
        for (variant, count, text) in cases {
            let e = Entry { variant, count };
            assert_eq!(e.render(), text);
            assert_eq!(Entry::parse(text), Some(e));
        }
        for bad in ["c", "x1", "b x1", "b x", "x0", "", "b  x2x"] {
            assert_eq!(Entry::parse(bad), None, "{bad}");
        }
    }

    #[test]
    fn empty_store_renders_every_row_blank() {
        let plans = bundled_matrix();
        let table = DefectTable::build(SweepKind::Sampling, &plans, &[]);
        assert_eq!(table.rows.len(), 15);
        assert!(table.rows.iter().all(|r| r.cells.iter().all(DefectCell::is_empty)));
        assert!(parse_report(&table.render_text(), &plans).unwrap().is_empty());
        let summary = summarize(&[], &plans);
        assert!(summary
            .categories
            .iter()
            .all(|c| c.sampling.total_count == 0 && c.model.runs_affected == 0));
    }

    #[test]
    fn model_rows_are_alphabetical() {
        let table = DefectTable::build(SweepKind::Model, &bundled_matrix(), &[]);
        let labels: Vec<&str> = table.rows.iter().map(|r| r.label.as_str()).collect();
        let mut sorted = labels.clone();
        sorted.sort();
        assert_eq!(labels, sorted);
        assert_eq!(labels.len(), 6);
    }

    #[test]
    fn csv_has_one_line_per_row() {
        let plans = bundled_matrix();
        let table = DefectTable::build(
            SweepKind::Sampling,
            &plans,
            &AnnotationFile::sampling_fixture().annotations,
        );
        let csv = table.render_csv();
        assert_eq!(csv.lines().count(), 16);
        assert!(csv.lines().next().unwrap().ends_with("code_duplication"));
    }
}
