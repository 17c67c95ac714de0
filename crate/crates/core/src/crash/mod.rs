//! Crash descriptions and benchmark cases.
//!
//! A crash description has up to three parts: the buggy code, the crash
//! information (exception type, message and trace) and the natural-language
//! crash context. Cases bundle a description with its category and the
//! ground truth taken from the accepted answer of the source thread.

mod pool;
pub mod trace;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use pool::{read_case_pool, write_case_pool, CaseRecord, CrashInfoRecord, GroundTruthRecord};
pub use trace::{JvmGrammar, RawFallback, TraceGrammar, TracebackGrammar};

#[derive(Debug, Error)]
pub enum CrashError {
    #[error("crash text is empty")]
    EmptyInput,
    #[error("level {level} requires {part}, which the case does not have")]
    MissingPart {
        level: InformationLevel,
        part: DescriptionPart,
    },
    #[error("case {id:?} violates the schema: {}", violations.join("; "))]
    SchemaViolation { id: String, violations: Vec<String> },
    #[error("duplicate case id {0:?}")]
    DuplicateId(String),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Language of a benchmark case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Java,
    Python,
    Cpp,
    Other,
}

impl Language {
    pub fn frame_hint(self) -> FrameLanguage {
        match self {
            Language::Java => FrameLanguage::Java,
            Language::Python => FrameLanguage::Python,
            Language::Cpp => FrameLanguage::Cpp,
            Language::Other => FrameLanguage::Unknown,
        }
    }
}

impl std::str::FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "java" => Ok(Language::Java),
            "python" => Ok(Language::Python),
            "cpp" | "c++" | "c" => Ok(Language::Cpp),
            "other" => Ok(Language::Other),
            other => Err(format!("unknown language {other:?}")),
        }
    }
}

/// Language a trace frame was parsed as.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameLanguage {
    Java,
    Python,
    Cpp,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackFrame {
    pub symbol: String,
    pub location: String,
    pub line: Option<u32>,
    pub language_hint: FrameLanguage,
}

/// Structured crash information. `frames[0]` is the first frame as printed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashInfo {
    pub exception_type: String,
    pub error_message: String,
    pub frames: Vec<StackFrame>,
    pub raw: String,
}

impl CrashInfo {
    fn violations(&self, out: &mut Vec<String>) {
        if self.exception_type.chars().any(char::is_whitespace) {
            out.push(format!(
                "exception_type {:?} contains whitespace",
                self.exception_type
            ));
        }
        let has_structure = !self.exception_type.is_empty()
            || !self.error_message.is_empty()
            || !self.frames.is_empty();
        if has_structure && self.raw.trim().is_empty() {
            out.push("crash_info.trace_raw is empty but other crash fields are set".into());
        }
        for frame in &self.frames {
            if frame.symbol.is_empty() {
                out.push("stack frame with empty symbol".into());
            }
            if frame.line == Some(0) {
                out.push("stack frame line numbers start at 1".into());
            }
        }
    }
}

/// Parses raw crash text into structured form.
///
/// JVM and interpreter tracebacks are recognized whatever the hint; the hinted
/// grammar is tried first. Text in no known format keeps only `raw`.
pub fn parse_crash_info(raw: &str, hint: FrameLanguage) -> Result<CrashInfo, CrashError> {
    if raw.trim().is_empty() {
        return Err(CrashError::EmptyInput);
    }
    let info = trace::grammars_for(hint)
        .iter()
        .find_map(|g| g.parse(raw))
        .expect("raw fallback always parses");
    Ok(info)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuggyCode {
    pub text: String,
    pub language: Language,
}

impl BuggyCode {
    /// Number of lines as the editor numbers them; line references index into these.
    pub fn line_count(&self) -> usize {
        self.text.lines().count()
    }

    /// The 1-based source line, if in range.
    pub fn line(&self, n: u32) -> Option<&str> {
        (n >= 1).then(|| self.text.lines().nth(n as usize - 1)).flatten()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashDescription {
    pub buggy_code: Option<BuggyCode>,
    pub crash_info: Option<CrashInfo>,
    pub crash_context: Option<String>,
    /// 1-based line numbers into `buggy_code`.
    pub loc_lines: Option<Vec<u32>>,
}

impl CrashDescription {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.buggy_code.is_none() && self.crash_info.is_none() && self.crash_context.is_none() {
            out.push("description needs at least one of buggy_code, crash_info, crash_context".into());
        }
        if let Some(info) = &self.crash_info {
            info.violations(&mut out);
        }
        if let Some(locs) = &self.loc_lines {
            match &self.buggy_code {
                None => out.push("loc_lines given without buggy_code".into()),
                Some(code) => {
                    let count = code.line_count();
                    for &l in locs {
                        if l == 0 || l as usize > count {
                            out.push(format!("loc line {l} outside buggy_code (1..={count})"));
                        }
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), CrashError> {
        let violations = self.violations();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(CrashError::SchemaViolation {
                id: String::new(),
                violations,
            })
        }
    }

    pub fn has(&self, part: DescriptionPart) -> bool {
        match part {
            DescriptionPart::BuggyCode => self.buggy_code.is_some(),
            DescriptionPart::CrashInfo => self.crash_info.is_some(),
            DescriptionPart::CrashContext => self.crash_context.is_some(),
            DescriptionPart::LocLines => self.loc_lines.is_some(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DescriptionPart {
    BuggyCode,
    CrashInfo,
    CrashContext,
    LocLines,
}

impl fmt::Display for DescriptionPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescriptionPart::BuggyCode => "buggy_code",
            DescriptionPart::CrashInfo => "crash_info",
            DescriptionPart::CrashContext => "crash_context",
            DescriptionPart::LocLines => "loc_lines",
        })
    }
}

/// How much of a description a prompt carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InformationLevel {
    /// Buggy code only.
    L1CodeOnly,
    /// Adds crash information.
    L2CodePlusInfo,
    /// Adds crash context.
    L3FullDescription,
    /// Adds the faulty line references.
    L4FullPlusLoc,
}

impl InformationLevel {
    pub const ALL: [InformationLevel; 4] = [
        InformationLevel::L1CodeOnly,
        InformationLevel::L2CodePlusInfo,
        InformationLevel::L3FullDescription,
        InformationLevel::L4FullPlusLoc,
    ];

    pub fn parts(self) -> &'static [DescriptionPart] {
        use DescriptionPart::*;
        match self {
            InformationLevel::L1CodeOnly => &[BuggyCode],
            InformationLevel::L2CodePlusInfo => &[BuggyCode, CrashInfo],
            InformationLevel::L3FullDescription => &[BuggyCode, CrashInfo, CrashContext],
            InformationLevel::L4FullPlusLoc => &[BuggyCode, CrashInfo, CrashContext, LocLines],
        }
    }
}

impl fmt::Display for InformationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InformationLevel::L1CodeOnly => "L1",
            InformationLevel::L2CodePlusInfo => "L2",
            InformationLevel::L3FullDescription => "L3",
            InformationLevel::L4FullPlusLoc => "L4",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BugCategory {
    #[serde(rename = "code")]
    CodeRelated,
    #[serde(rename = "environment")]
    EnvironmentRelated,
}

impl BugCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            BugCategory::CodeRelated => "code",
            BugCategory::EnvironmentRelated => "environment",
        }
    }
}

impl fmt::Display for BugCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BugCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "code" | "code-related" | "coderelated" => Ok(BugCategory::CodeRelated),
            "environment" | "env" | "environment-related" | "environmentrelated" => {
                Ok(BugCategory::EnvironmentRelated)
            }
            other => Err(format!("unknown category {other:?} (expected code or environment)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub localization_answer: String,
    pub repair_answer: String,
    pub solution_summary: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrashBugCase {
    pub id: String,
    pub language: Language,
    pub category: BugCategory,
    pub description: CrashDescription,
    pub ground_truth: GroundTruth,
    pub source_url: Option<String>,
}

/// Projects a case's description onto the parts an information level carries.
pub fn compose_description(
    case: &CrashBugCase,
    level: InformationLevel,
) -> Result<CrashDescription, CrashError> {
    project(&case.description, level)
}

/// Same as [`compose_description`] for a bare description.
pub fn project(
    description: &CrashDescription,
    level: InformationLevel,
) -> Result<CrashDescription, CrashError> {
    if let Some(&part) = level.parts().iter().find(|&&p| !description.has(p)) {
        return Err(CrashError::MissingPart { level, part });
    }
    let keeps = |p: DescriptionPart| level.parts().contains(&p);
    Ok(CrashDescription {
        buggy_code: description.buggy_code.clone(),
        crash_info: description
            .crash_info
            .clone()
            .filter(|_| keeps(DescriptionPart::CrashInfo)),
        crash_context: description
            .crash_context
            .clone()
            .filter(|_| keeps(DescriptionPart::CrashContext)),
        loc_lines: description
            .loc_lines
            .clone()
            .filter(|_| keeps(DescriptionPart::LocLines)),
    })
}

/// Validates a case-pool record, collecting every failed invariant.
pub fn validate_case(record: &CaseRecord) -> Result<CrashBugCase, CrashError> {
    let mut violations = Vec::new();

    if record.id.trim().is_empty() {
        violations.push("id is empty".to_string());
    }
    let language = record.language.parse::<Language>().unwrap_or_else(|e| {
        violations.push(e);
        Language::Other
    });
    let category = match record.category.as_deref() {
        Some(c) => c.parse::<BugCategory>().map_err(|e| violations.push(e)).ok(),
        None => {
            violations.push("category is missing".into());
            None
        }
    };

    let description = record.description(language);
    violations.extend(description.violations());

    let ground_truth = match &record.ground_truth {
        Some(gt) => {
            if gt.localization.trim().is_empty() {
                violations.push("ground_truth.localization is empty".into());
            }
            if gt.repair.trim().is_empty() {
                violations.push("ground_truth.repair is empty".into());
            }
            Some(GroundTruth {
                localization_answer: gt.localization.clone(),
                repair_answer: gt.repair.clone(),
                solution_summary: gt.summary.clone(),
            })
        }
        None => {
            violations.push("ground_truth is missing".into());
            None
        }
    };
    if let Some(locs) = &record.loc_lines {
        if locs.iter().any(|&l| l < 1) {
            violations.push("loc_lines must be positive".into());
        }
    }

    match (category, ground_truth) {
        (Some(category), Some(ground_truth)) if violations.is_empty() => Ok(CrashBugCase {
            id: record.id.clone(),
            language,
            category,
            description,
            ground_truth,
            source_url: record.source_url.clone(),
        }),
        _ => Err(CrashError::SchemaViolation {
            id: record.id.clone(),
            violations,
        }),
    }
}

/// Newline-delimited non-empty lines.
pub fn code_lines(text: &str) -> usize {
    text.lines().filter(|l| !l.trim().is_empty()).count()
}

/// Whitespace-delimited tokens.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}
