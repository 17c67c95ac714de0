//! Case-pool mining from Stack Overflow `Posts.xml` dumps.

mod catalog;
mod criteria;
mod dump;
mod sample;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalog::{build_catalog, CatalogBuild, ExceptionCatalog, EXCEPTION_SUFFIXES, JDK_SEED};
pub use criteria::{passes_criteria, CriteriaReport, Criterion, ExceptionMatch, MatchLocation};
pub use dump::{html_to_text, parse_dump, DumpReader, DumpStats, DEFAULT_MAX_PENDING};
pub use sample::{draft_case, pool_stats, render_stats, sample, GroupStats, PoolStats};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("malformed dump row at line {line}: {reason}")]
    MalformedDump { line: u64, reason: String },
    #[error("dump unreadable: {0}")]
    Io(#[from] std::io::Error),
    #[error("catalog source {path} unreadable: {source}")]
    SourceUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("pool has {available} entries, {requested} requested")]
    PoolTooSmall { requested: usize, available: usize },
    #[error("empty pool")]
    EmptyPool,
}

/// A question thread, joined with its accepted answer when the dump has it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadRecord {
    pub post_id: u64,
    pub title: String,
    /// Lowercase.
    pub tags: Vec<String>,
    pub score: i64,
    /// Body markup as stored in the dump (HTML).
    pub body: String,
    #[serde(default)]
    pub accepted_answer_id: Option<u64>,
    #[serde(default)]
    pub accepted_answer_body: Option<String>,
    #[serde(default)]
    pub creation_date: String,
}

impl ThreadRecord {
    pub fn has_accepted_answer(&self) -> bool {
        self.accepted_answer_id.is_some() || self.accepted_answer_body.is_some()
    }

    pub fn url(&self) -> String {
        format!("https://stackoverflow.com/questions/{}", self.post_id)
    }
}
