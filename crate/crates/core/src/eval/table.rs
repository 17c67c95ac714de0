//! Grouped comparison tables in markdown and CSV.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    accuracy, accuracy_by_run, aggregate_likert, localized_with_multiple, majority_counts, mean_solution_count,
    success_counts, Dimension, EvalError, EvaluationRecord, SuccessCounts,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    Model,
    Category,
    Prompt,
}

impl GroupKey {
    pub fn header(self) -> &'static str {
        match self {
            GroupKey::Model => "Model",
            GroupKey::Category => "Category",
            GroupKey::Prompt => "Prompt",
        }
    }

    fn value(self, r: &EvaluationRecord) -> String {
        let v = match self {
            GroupKey::Model => &r.model,
            GroupKey::Category => &r.category,
            GroupKey::Prompt => &r.prompt,
        };
        v.clone().unwrap_or_else(|| "-".to_string())
    }
}

impl std::str::FromStr for GroupKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "model" => Ok(GroupKey::Model),
            "category" => Ok(GroupKey::Category),
            "prompt" => Ok(GroupKey::Prompt),
            other => Err(format!("unknown grouping {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    LocalizationAccuracy,
    RepairAccuracy,
    LocalizationSuccess,
    RepairSuccess,
    LocWithMulti,
    SolutionNum,
    Usefulness,
    Conciseness,
    Interactivity,
}

impl Metric {
    pub fn header(self) -> &'static str {
        match self {
            Metric::LocalizationAccuracy => "Localization Accuracy",
            Metric::RepairAccuracy => "Repair Accuracy",
            Metric::LocalizationSuccess => "Localization Success",
            Metric::RepairSuccess => "Repair Success",
            Metric::LocWithMulti => "Loc. with Multi.",
            Metric::SolutionNum => "Solution Num.",
            Metric::Usefulness => "Usefulness",
            Metric::Conciseness => "Conciseness",
            Metric::Interactivity => "Interactivity",
        }
    }

    fn decimals(self) -> usize {
        match self {
            Metric::SolutionNum => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum MetricValue {
    Percent(f64),
    Count(SuccessCounts),
    Number(f64),
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub group_by: Vec<GroupKey>,
    pub metrics: Vec<Metric>,
    /// Value of the baseline row; deltas are computed against the row that
    /// shares every other key and has this value in the prompt column (or in
    /// the last grouping column when prompts are not grouped).
    pub baseline: Option<String>,
    /// Success counts use the two-of-three rule and accuracy averages runs.
    pub three_run: bool,
}

impl Default for TableSpec {
    fn default() -> Self {
        TableSpec {
            group_by: vec![GroupKey::Model, GroupKey::Category, GroupKey::Prompt],
            metrics: vec![Metric::LocalizationAccuracy, Metric::RepairAccuracy],
            baseline: None,
            three_run: false,
        }
    }
}

impl TableSpec {
    fn baseline_column(&self) -> Option<usize> {
        self.group_by
            .iter()
            .position(|k| *k == GroupKey::Prompt)
            .or_else(|| self.group_by.len().checked_sub(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub key: Vec<String>,
    pub values: Vec<MetricValue>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTable {
    pub markdown: String,
    pub csv: String,
}

fn metric_value(metric: Metric, recs: &[EvaluationRecord], three_run: bool) -> Result<MetricValue, EvalError> {
    let acc = |dim| -> Result<MetricValue, EvalError> {
        Ok(MetricValue::Percent(if three_run {
            accuracy_by_run(recs, dim)?.mean
        } else {
            accuracy(recs, dim)?
        }))
    };
    let success = |dim| -> Result<MetricValue, EvalError> {
        Ok(MetricValue::Count(if three_run {
            majority_counts(recs, dim)?
        } else {
            success_counts(recs, dim)
        }))
    };
    Ok(match metric {
        Metric::LocalizationAccuracy => acc(Dimension::Localization)?,
        Metric::RepairAccuracy => acc(Dimension::Repair)?,
        Metric::LocalizationSuccess => success(Dimension::Localization)?,
        Metric::RepairSuccess => success(Dimension::Repair)?,
        Metric::LocWithMulti => MetricValue::Count(SuccessCounts {
            successes: localized_with_multiple(recs),
            total: recs.len(),
        }),
        Metric::SolutionNum => MetricValue::Number(mean_solution_count(recs)?),
        Metric::Usefulness | Metric::Conciseness | Metric::Interactivity => match aggregate_likert(recs) {
            Ok(s) => match metric {
                Metric::Usefulness => MetricValue::Number(s.usefulness),
                Metric::Conciseness => MetricValue::Number(s.conciseness),
                _ => s.interactivity.map_or(MetricValue::Missing, MetricValue::Number),
            },
            Err(EvalError::MissingLikert) => MetricValue::Missing,
            Err(e) => return Err(e),
        },
    })
}

/// Groups records by the spec's keys, in order of first appearance.
pub fn compute_groups(records: &[EvaluationRecord], spec: &TableSpec) -> Result<Vec<GroupRow>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let mut groups: Vec<(Vec<String>, Vec<EvaluationRecord>)> = Vec::new();
    for r in records {
        let key: Vec<String> = spec.group_by.iter().map(|k| k.value(r)).collect();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, recs)) => recs.push(r.clone()),
            None => groups.push((key, vec![r.clone()])),
        }
    }
    groups
        .into_iter()
        .map(|(key, recs)| {
            let values = spec
                .metrics
                .iter()
                .map(|m| metric_value(*m, &recs, spec.three_run))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(GroupRow { key, values })
        })
        .collect()
}

/// Signed difference in percentage points, one decimal.
fn format_delta(treatment: f64, baseline: f64) -> String {
    let mut d = ((treatment - baseline) * 10.0).round() / 10.0;
    if d == 0.0 {
        d = 0.0;
    }
    format!("{d:+.1}%")
}

fn format_value(metric: Metric, v: &MetricValue) -> String {
    match v {
        MetricValue::Percent(p) => format!("{p:.1}%"),
        MetricValue::Count(c) => c.to_string(),
        MetricValue::Number(n) => format!("{n:.*}", metric.decimals()),
        MetricValue::Missing => "-".to_string(),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-row deltas against the baseline row, None for the baseline itself.
fn deltas(spec: &TableSpec, rows: &[GroupRow]) -> Result<Vec<Option<Vec<Option<String>>>>, EvalError> {
    let Some(baseline) = &spec.baseline else {
        return Ok(vec![None; rows.len()]);
    };
    let col = spec
        .baseline_column()
        .ok_or_else(|| EvalError::MissingBaseline(baseline.clone()))?;
    rows.iter()
        .map(|row| {
            if row.key[col] == *baseline {
                return Ok(None);
            }
            let base = rows
                .iter()
                .find(|b| {
                    b.key[col] == *baseline && b.key.iter().enumerate().all(|(i, k)| i == col || *k == row.key[i])
                })
                .ok_or_else(|| EvalError::MissingBaseline(baseline.clone()))?;
            Ok(Some(
                row.values
                    .iter()
                    .zip(&base.values)
                    .map(|(v, b)| match (v, b) {
                        (MetricValue::Percent(t), MetricValue::Percent(b)) => Some(format_delta(*t, *b)),
                        _ => None,
                    })
                    .collect(),
            ))
        })
        .collect()
}

pub fn render_markdown(spec: &TableSpec, rows: &[GroupRow]) -> Result<String, EvalError> {
    let deltas = deltas(spec, rows)?;
    let headers: Vec<&str> = spec
        .group_by
        .iter()
        .map(|k| k.header())
        .chain(spec.metrics.iter().map(|m| m.header()))
        .collect();
    let mut out = format!("| {} |\n", headers.join(" | "));
    let aligns: Vec<&str> = spec
        .group_by
        .iter()
        .map(|_| "---")
        .chain(spec.metrics.iter().map(|_| "---:"))
        .collect();
    let _ = writeln!(out, "|{}|", aligns.join("|"));
    for (row, delta) in rows.iter().zip(&deltas) {
        let mut cells: Vec<String> = row.key.clone();
        for (i, (m, v)) in spec.metrics.iter().zip(&row.values).enumerate() {
            let mut cell = format_value(*m, v);
            if let Some(Some(d)) = delta.as_ref().map(|d| &d[i]) {
                let _ = write!(cell, " ({d})");
            }
            cells.push(cell);
        }
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    Ok(out)
}

pub fn render_csv(spec: &TableSpec, rows: &[GroupRow]) -> Result<String, EvalError> {
    let deltas = deltas(spec, rows)?;
    let with_delta = |m: &Metric| {
        spec.baseline.is_some() && matches!(m, Metric::LocalizationAccuracy | Metric::RepairAccuracy)
    };
    let mut headers: Vec<String> = spec.group_by.iter().map(|k| k.header().to_string()).collect();
    for m in &spec.metrics {
        headers.push(m.header().to_string());
        if with_delta(m) {
            headers.push(format!("{} Delta", m.header()));
        }
    }
    let mut out = headers.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(",");
    out.push('\n');
    for (row, delta) in rows.iter().zip(&deltas) {
        let mut cells: Vec<String> = row.key.iter().map(|k| csv_field(k)).collect();
        for (i, (m, v)) in spec.metrics.iter().zip(&row.values).enumerate() {
            cells.push(csv_field(&format_value(*m, v)));
            if with_delta(m) {
                cells.push(delta.as_ref().and_then(|d| d[i].clone()).unwrap_or_default());
            }
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn render_table(spec: &TableSpec, rows: &[GroupRow]) -> Result<RenderedTable, EvalError> {
    Ok(RenderedTable {
        markdown: render_markdown(spec, rows)?,
        csv: render_csv(spec, rows)?,
    })
}
