//! File-backed persistence: one append-only event log per session under
//! `<data_dir>/sessions/<id>.jsonl`, plus `<data_dir>/index.json` holding the
//! session summaries. The logs are authoritative; the index is rewritten from
//! memory after every change and rebuilt from the logs at startup.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crashsolver_core::crash::{BugCategory, CrashDescription};
use crashsolver_core::engine::{Event, Limits, StrategyConfig};

use crate::api::SessionSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(clippy::large_enum_variant)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Created {
        at: DateTime<Utc>,
        session_id: String,
        case_id: Option<String>,
        description: CrashDescription,
        category: BugCategory,
        strategy: StrategyConfig,
        limits: Limits,
        provider: String,
    },
    /// Client events and assistant replies alike, in the order applied.
    Event { at: DateTime<Utc>, event: Event },
    ProviderError { at: DateTime<Utc>, message: String },
}

/// A session id and its entries, or why its log could not be read.
pub type LoadedLog = (String, Result<Vec<LogEntry>, String>);

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.jsonl"))
    }

    /// Appends entries with a single write and syncs the file.
    pub fn append(&self, id: &str, entries: &[LogEntry]) -> io::Result<()> {
        let mut buf = Vec::new();
        for e in entries {
            serde_json::to_writer(&mut buf, e)?;
            buf.push(b'\n');
        }
        let mut file = OpenOptions::new().create(true).append(true).open(self.log_path(id))?;
        file.write_all(&buf)?;
        file.sync_data()
    }

    /// Every session log. A torn final line (an interrupted append) is
    /// dropped; any other unreadable line fails that session's load.
    pub fn load_all(&self) -> io::Result<Vec<LoadedLog>> {
        let mut out = Vec::new();
        let mut paths: Vec<PathBuf> = fs::read_dir(self.root.join("sessions"))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        for path in paths {
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            let loaded = read_log(&path).and_then(|(entries, torn)| {
                if torn {
                    rewrite(&path, &entries).map_err(|e| e.to_string())?;
                }
                Ok(entries)
            });
            out.push((id, loaded));
        }
        Ok(out)
    }

    pub fn write_index(&self, summaries: &[&SessionSummary]) -> io::Result<()> {
        let tmp = self.root.join("index.json.tmp");
        let mut file = File::create(&tmp)?;
        serde_json::to_writer_pretty(&mut file, summaries)?;
        file.write_all(b"\n")?;
        file.sync_data()?;
        fs::rename(tmp, self.root.join("index.json"))
    }
}

fn rewrite(path: &Path, entries: &[LogEntry]) -> io::Result<()> {
    let tmp = path.with_extension("jsonl.tmp");
    let mut file = File::create(&tmp)?;
    for e in entries {
        serde_json::to_writer(&mut file, e)?;
        file.write_all(b"\n")?;
    }
    file.sync_data()?;
    fs::rename(tmp, path)
}

/// Entries, and whether a torn final line was dropped.
fn read_log(path: &Path) -> Result<(Vec<LogEntry>, bool), String> {
    let file = File::open(path).map_err(|e| e.to_string())?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut entries = Vec::new();
    let last = lines.len().saturating_sub(1);
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(e) => entries.push(e),
            Err(_) if idx == last => return Ok((entries, true)),
            Err(e) => return Err(format!("{}:{}: {e}", path.display(), idx + 1)),
        }
    }
    Ok((entries, false))
}
