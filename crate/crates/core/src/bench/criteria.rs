//! The six thread-selection criteria.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{html_to_text, ExceptionCatalog, ThreadRecord};
use crate::crash::{JvmGrammar, TraceGrammar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// 1: "java" as a whole word in the title or a tag.
    JavaKeyword,
    /// 2: "exception" or "error" anywhere in the title or a tag.
    ErrorKeyword,
    /// 3: the thread has an accepted answer.
    AcceptedAnswer,
    /// 4: score of at least 1.
    PositiveScore,
    /// 5: a code block or a stack trace in the body.
    ConcreteSymptom,
    /// 6: a catalog exception type in the title or body.
    KnownException,
}

impl Criterion {
    pub const ALL: [Criterion; 6] = [
        Criterion::JavaKeyword,
        Criterion::ErrorKeyword,
        Criterion::AcceptedAnswer,
        Criterion::PositiveScore,
        Criterion::ConcreteSymptom,
        Criterion::KnownException,
    ];

    /// 1-based position in the criteria list.
    pub fn number(self) -> u8 {
        Criterion::ALL.iter().position(|c| *c == self).unwrap() as u8 + 1
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchLocation {
    Title,
    Body,
    Both,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExceptionMatch {
    /// Catalog entry, fully qualified.
    pub name: String,
    pub location: MatchLocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub post_id: u64,
    pub criteria: BTreeMap<Criterion, bool>,
    pub exception_match: Option<ExceptionMatch>,
    pub overall: bool,
}

impl CriteriaReport {
    pub fn passed(&self, c: Criterion) -> bool {
        self.criteria.get(&c).copied().unwrap_or(false)
    }

    pub fn failed(&self) -> Vec<Criterion> {
        Criterion::ALL.into_iter().filter(|c| !self.passed(*c)).collect()
    }
}

static JAVA_WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bjava\b").unwrap());
static CODE_MARKUP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)<(?:pre|code)\b").unwrap());
static IDENT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[A-Za-z_$][\w$]*(?:\.[A-Za-z_$][\w$]*)*").unwrap());

fn first_known(text: &str, catalog: &ExceptionCatalog) -> Option<String> {
    IDENT
        .find_iter(text)
        .find_map(|m| catalog.lookup(m.as_str()).map(str::to_string))
}

/// Evaluates every criterion independently.
pub fn passes_criteria(thread: &ThreadRecord, catalog: &ExceptionCatalog) -> CriteriaReport {
    let in_title_or_tags = |f: &dyn Fn(&str) -> bool| f(&thread.title) || thread.tags.iter().any(|t| f(t));
    let java = in_title_or_tags(&|s| JAVA_WORD.is_match(s));
    let error = in_title_or_tags(&|s| {
        let lower = s.to_lowercase();
        lower.contains("exception") || lower.contains("error")
    });

    let body_text = html_to_text(&thread.body);
    let symptom = CODE_MARKUP.is_match(&thread.body)
        || JvmGrammar
            .parse(&body_text)
            .is_some_and(|info| !info.frames.is_empty());

    let in_title = first_known(&thread.title, catalog);
    let in_body = first_known(&body_text, catalog);
    let exception_match = match (in_title, in_body) {
        (Some(t), Some(_)) => Some(ExceptionMatch {
            name: t,
            location: MatchLocation::Both,
        }),
        (Some(t), None) => Some(ExceptionMatch {
            name: t,
            location: MatchLocation::Title,
        }),
        (None, Some(b)) => Some(ExceptionMatch {
            name: b,
            location: MatchLocation::Body,
        }),
        (None, None) => None,
    };

    let results = [
        java,
        error,
        thread.has_accepted_answer(),
        thread.score >= 1,
        symptom,
        exception_match.is_some(),
    ];
    let criteria: BTreeMap<Criterion, bool> = Criterion::ALL.into_iter().zip(results).collect();
    CriteriaReport {
        post_id: thread.post_id,
        overall: results.iter().all(|&r| r),
        criteria,
        exception_match,
    }
}
