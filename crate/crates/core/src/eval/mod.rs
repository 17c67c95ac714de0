//! Evaluation metrics over judged responses.
//!
//! Accuracy is the mean over cases of correct/total solutions, times 100. A
//! response with no solutions contributes 0.

mod table;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use table::{compute_groups, render_csv, render_markdown, render_table, GroupKey, GroupRow, Metric, MetricValue, RenderedTable, TableSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records")]
    EmptyRecords,
    #[error("expected 3 runs, got {0}")]
    WrongRunCount(usize),
    #[error("records belong to different cases: {0} and {1}")]
    MixedCases(String, String),
    #[error("all labels identical for both raters but agreement is not perfect")]
    DegenerateMarginals,
    #[error("no baseline row {0:?}")]
    MissingBaseline(String),
    #[error("invalid record {case_id}: {reason}")]
    InvalidRecord { case_id: String, reason: String },
    #[error("no Likert ratings")]
    MissingLikert,
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Localization,
    Repair,
}

/// Four-point agreement ratings, 1 (disagree) to 4 (agree).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Likert {
    pub usefulness: u8,
    pub conciseness: u8,
    pub interactivity: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub case_id: String,
    #[serde(default = "first_run")]
    pub run_index: u8,
    pub total_solutions: u32,
    pub correct_localization_solutions: u32,
    pub correct_repair_solutions: u32,
    #[serde(default = "one_round")]
    pub rounds: u32,
    #[serde(default)]
    pub likert: Option<Likert>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub category: Option<String>,
    #[serde(default)]
    pub prompt: Option<String>,
}

fn first_run() -> u8 {
    1
}

fn one_round() -> u32 {
    1
}

impl EvaluationRecord {
    pub fn new(case_id: impl Into<String>, total: u32, correct_loc: u32, correct_repair: u32) -> Self {
        EvaluationRecord {
            case_id: case_id.into(),
            run_index: 1,
            total_solutions: total,
            correct_localization_solutions: correct_loc,
            correct_repair_solutions: correct_repair,
            rounds: 1,
            likert: None,
            model: None,
            category: None,
            prompt: None,
        }
    }

    pub fn correct(&self, dim: Dimension) -> u32 {
        match dim {
            Dimension::Localization => self.correct_localization_solutions,
            Dimension::Repair => self.correct_repair_solutions,
        }
    }

    pub fn succeeded(&self, dim: Dimension) -> bool {
        self.correct(dim) >= 1
    }

    /// correct/total for one case; 0 when there are no solutions.
    pub fn ratio(&self, dim: Dimension) -> f64 {
        if self.total_solutions == 0 {
            0.0
        } else {
            self.correct(dim) as f64 / self.total_solutions as f64
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |reason: String| EvalError::InvalidRecord {
            case_id: self.case_id.clone(),
            reason,
        };
        if !(1..=3).contains(&self.run_index) {
            return Err(bad(format!("run_index {} outside 1..3", self.run_index)));
        }
        for dim in [Dimension::Localization, Dimension::Repair] {
            if self.correct(dim) > self.total_solutions {
                return Err(bad(format!("{dim:?} correct count exceeds total_solutions")));
            }
        }
        if let Some(l) = self.likert {
            for (name, v) in [
                ("usefulness", l.usefulness),
                ("conciseness", l.conciseness),
                ("interactivity", l.interactivity),
            ] {
                if !(1..=4).contains(&v) {
                    return Err(bad(format!("{name} rating {v} outside 1..4")));
                }
            }
        }
        Ok(())
    }
}

/// Reads line-delimited records, validating each.
pub fn read_records(reader: impl BufRead) -> Result<Vec<EvaluationRecord>, EvalError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EvaluationRecord =
            serde_json::from_str(&line).map_err(|e| EvalError::Json { line: idx + 1, source: e })?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records(mut writer: impl Write, records: &[EvaluationRecord]) -> Result<(), EvalError> {
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(|e| EvalError::Json { line: 0, source: e })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Single-run accuracy in percent, one record per case.
pub fn accuracy(records: &[EvaluationRecord], dim: Dimension) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let sum: f64 = records.iter().map(|r| r.ratio(dim)).sum();
    Ok(sum / records.len() as f64 * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAccuracy {
    pub per_run: BTreeMap<u8, f64>,
    pub mean: f64,
}

/// Accuracy computed per run index, and the mean of those per-run values.
pub fn accuracy_by_run(records: &[EvaluationRecord], dim: Dimension) -> Result<RunAccuracy, EvalError> {
    let mut runs: BTreeMap<u8, Vec<EvaluationRecord>> = BTreeMap::new();
    for r in records {
        runs.entry(r.run_index).or_default().push(r.clone());
    }
    let mut per_run = BTreeMap::new();
    for (run, recs) in &runs {
        per_run.insert(*run, accuracy(recs, dim)?);
    }
    if per_run.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let mean = per_run.values().sum::<f64>() / per_run.len() as f64;
    Ok(RunAccuracy { per_run, mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessCounts {
    pub successes: usize,
    pub total: usize,
}

impl std::fmt::Display for SuccessCounts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.successes, self.total)
    }
}

/// Cases with at least one correct solution.
pub fn success_counts(records: &[EvaluationRecord], dim: Dimension) -> SuccessCounts {
    SuccessCounts {
        successes: records.iter().filter(|r| r.succeeded(dim)).count(),
        total: records.len(),
    }
}

/// Cases localized correctly while offering more than one solution.
pub fn localized_with_multiple(records: &[EvaluationRecord]) -> usize {
    records
        .iter()
        .filter(|r| r.succeeded(Dimension::Localization) && r.total_solutions > 1)
        .count()
}

/// At least two of exactly three runs succeed.
pub fn majority_success(runs: &[EvaluationRecord], dim: Dimension) -> Result<bool, EvalError> {
    if runs.len() != 3 {
        return Err(EvalError::WrongRunCount(runs.len()));
    }
    if let Some(other) = runs.iter().find(|r| r.case_id != runs[0].case_id) {
        return Err(EvalError::MixedCases(runs[0].case_id.clone(), other.case_id.clone()));
    }
    Ok(runs.iter().filter(|r| r.succeeded(dim)).count() >= 2)
}

/// Success counts under the two-of-three rule, grouping records by case.
pub fn majority_counts(records: &[EvaluationRecord], dim: Dimension) -> Result<SuccessCounts, EvalError> {
    let mut by_case: BTreeMap<&str, Vec<EvaluationRecord>> = BTreeMap::new();
    for r in records {
        by_case.entry(&r.case_id).or_default().push(r.clone());
    }
    let mut successes = 0;
    for runs in by_case.values() {
        if majority_success(runs, dim)? {
            successes += 1;
        }
    }
    Ok(SuccessCounts {
        successes,
        total: by_case.len(),
    })
}

pub fn mean_solution_count(records: &[EvaluationRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    Ok(records.iter().map(|r| r.total_solutions as f64).sum::<f64>() / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentPair {
    pub case_id: String,
    pub rater_a: String,
    pub rater_b: String,
}

impl JudgmentPair {
    pub fn new(case_id: impl Into<String>, a: impl Into<String>, b: impl Into<String>) -> Self {
        JudgmentPair {
            case_id: case_id.into(),
            rater_a: a.into(),
            rater_b: b.into(),
        }
    }
}

/// Cohen's kappa: (p_o - p_e) / (1 - p_e), with p_e from the product of
/// each rater's label marginals.
pub fn kappa(pairs: &[JudgmentPair]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let n = pairs.len() as f64;
    let mut a: BTreeMap<&str, f64> = BTreeMap::new();
    let mut b: BTreeMap<&str, f64> = BTreeMap::new();
    let mut agree = 0.0;
    for p in pairs {
        *a.entry(&p.rater_a).or_default() += 1.0;
        *b.entry(&p.rater_b).or_default() += 1.0;
        if p.rater_a == p.rater_b {
            agree += 1.0;
        }
    }
    let p_o = agree / n;
    let p_e: f64 = a
        .iter()
        .map(|(label, ca)| ca / n * b.get(label).copied().unwrap_or(0.0) / n)
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return if (p_o - 1.0).abs() < 1e-12 {
            Ok(1.0)
        } else {
            Err(EvalError::DegenerateMarginals)
        };
    }
    Ok(((p_o - p_e) / (1.0 - p_e)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikertSummary {
    pub usefulness: f64,
    pub conciseness: f64,
    /// Over multi-round records only; None when there are none.
    pub interactivity: Option<f64>,
    pub rated: usize,
}

pub fn aggregate_likert(records: &[EvaluationRecord]) -> Result<LikertSummary, EvalError> {
    let rated: Vec<(&EvaluationRecord, Likert)> = records.iter().filter_map(|r| r.likert.map(|l| (r, l))).collect();
    if rated.is_empty() {
        return Err(EvalError::MissingLikert);
    }
    let n = rated.len() as f64;
    let multi: Vec<f64> = rated
        .iter()
        .filter(|(r, _)| r.rounds > 1)
        .map(|(_, l)| l.interactivity as f64)
        .collect();
    Ok(LikertSummary {
        usefulness: rated.iter().map(|(_, l)| l.usefulness as f64).sum::<f64>() / n,
        conciseness: rated.iter().map(|(_, l)| l.conciseness as f64).sum::<f64>() / n,
        interactivity: (!multi.is_empty()).then(|| multi.iter().sum::<f64>() / multi.len() as f64),
        rated: rated.len(),
    })
}
