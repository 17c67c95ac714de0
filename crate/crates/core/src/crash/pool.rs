//! Case-pool files: one JSON case record per line.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{
    parse_crash_info, validate_case, BuggyCode, CrashBugCase, CrashDescription, CrashError,
    CrashInfo, Language,
};

/// A case as it appears in a case-pool file, before validation.
///
/// Drafts produced by the miner leave `category` and `ground_truth` null for
/// annotators to fill in.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub language: String,
    pub category: Option<String>,
    pub buggy_code: Option<String>,
    pub crash_info: Option<CrashInfoRecord>,
    pub crash_context: Option<String>,
    pub loc_lines: Option<Vec<i64>>,
    pub ground_truth: Option<GroundTruthRecord>,
    pub source_url: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashInfoRecord {
    #[serde(default)]
    pub exception_type: String,
    #[serde(default)]
    pub error_message: String,
    #[serde(default)]
    pub trace_raw: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    #[serde(default)]
    pub localization: String,
    #[serde(default)]
    pub repair: String,
    #[serde(default)]
    pub summary: String,
}

impl CaseRecord {
    /// Builds the description; frames are re-derived from `trace_raw`, explicit
    /// exception type and message win over parsed ones.
    pub fn description(&self, language: Language) -> CrashDescription {
        let crash_info = self.crash_info.as_ref().map(|rec| {
            let parsed = parse_crash_info(&rec.trace_raw, language.frame_hint()).unwrap_or(CrashInfo {
                exception_type: String::new(),
                error_message: String::new(),
                frames: Vec::new(),
                raw: rec.trace_raw.clone(),
            });
            CrashInfo {
                exception_type: if rec.exception_type.is_empty() {
                    parsed.exception_type
                } else {
                    rec.exception_type.clone()
                },
                error_message: if rec.error_message.is_empty() {
                    parsed.error_message
                } else {
                    rec.error_message.clone()
                },
                frames: parsed.frames,
                raw: rec.trace_raw.clone(),
            }
        });
        CrashDescription {
            buggy_code: self.buggy_code.clone().map(|text| BuggyCode { text, language }),
            crash_info,
            crash_context: self.crash_context.clone(),
            loc_lines: self
                .loc_lines
                .as_ref()
                .map(|v| v.iter().map(|&l| u32::try_from(l).unwrap_or(0)).collect()),
        }
    }
}

impl From<&CrashBugCase> for CaseRecord {
    fn from(case: &CrashBugCase) -> Self {
        let d = &case.description;
        CaseRecord {
            id: case.id.clone(),
            language: serde_json::to_value(case.language)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_else(|| "other".into()),
            category: Some(case.category.as_str().to_string()),
            buggy_code: d.buggy_code.as_ref().map(|c| c.text.clone()),
            crash_info: d.crash_info.as_ref().map(|i| CrashInfoRecord {
                exception_type: i.exception_type.clone(),
                error_message: i.error_message.clone(),
                trace_raw: i.raw.clone(),
            }),
            crash_context: d.crash_context.clone(),
            loc_lines: d
                .loc_lines
                .as_ref()
                .map(|v| v.iter().map(|&l| i64::from(l)).collect()),
            ground_truth: Some(GroundTruthRecord {
                localization: case.ground_truth.localization_answer.clone(),
                repair: case.ground_truth.repair_answer.clone(),
                summary: case.ground_truth.solution_summary.clone(),
            }),
            source_url: case.source_url.clone(),
        }
    }
}

/// Reads and validates a case pool. Blank lines are skipped; ids must be unique.
pub fn read_case_pool(reader: impl BufRead) -> Result<Vec<CrashBugCase>, CrashError> {
    let mut seen = HashSet::new();
    let mut cases = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CaseRecord = serde_json::from_str(&line).map_err(|source| CrashError::Json {
            line: idx + 1,
            source,
        })?;
        let case = validate_case(&record)?;
        if !seen.insert(case.id.clone()) {
            return Err(CrashError::DuplicateId(case.id));
        }
        cases.push(case);
    }
    Ok(cases)
}

pub fn write_case_pool<'a>(
    mut writer: impl Write,
    cases: impl IntoIterator<Item = &'a CrashBugCase>,
) -> Result<(), CrashError> {
    for case in cases {
        let line = serde_json::to_string(&CaseRecord::from(case))
            .map_err(|source| CrashError::Json { line: 0, source })?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}
