//! Line-delimited transcript files shared by sessions, the recorder and the
//! replay provider.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GatewayError, Role};
use crate::engine::{Annotation, Phase};

/// One transcript line. `phase` and `action` are set by sessions and left
/// empty by the provider recorder, which sees only request/response pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub seq: u64,
    pub role: Role,
    pub annotation: Option<Annotation>,
    pub text: String,
    pub phase: Option<Phase>,
    pub action: Option<String>,
}

pub fn read_transcript(path: impl AsRef<Path>) -> Result<Vec<TranscriptRecord>, GatewayError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| GatewayError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_transcript(BufReader::new(file))
}

pub fn parse_transcript(reader: impl BufRead) -> Result<Vec<TranscriptRecord>, GatewayError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| GatewayError::Io {
            path: PathBuf::new(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| GatewayError::InvalidTranscript(format!("line {}: {e}", idx + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_transcript<'a>(
    mut writer: impl Write,
    records: impl IntoIterator<Item = &'a TranscriptRecord>,
) -> std::io::Result<()> {
    for rec in records {
        serde_json::to_writer(&mut writer, rec)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

/// Append-only transcript writer; every record is flushed before returning.
#[derive(Debug)]
pub struct TranscriptSink {
    path: PathBuf,
    writer: BufWriter<File>,
    next_seq: u64,
}

impl TranscriptSink {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| GatewayError::Sink(format!("{}: {e}", path.display())))?;
        Ok(TranscriptSink {
            path,
            writer: BufWriter::new(file),
            next_seq: 1,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(
        &mut self,
        role: Role,
        annotation: Option<Annotation>,
        text: &str,
    ) -> Result<(), GatewayError> {
        let rec = TranscriptRecord {
            seq: self.next_seq,
            role,
            annotation,
            text: text.to_string(),
            phase: None,
            action: None,
        };
        write_transcript(&mut self.writer, [&rec])
            .map_err(|e| GatewayError::Sink(format!("{}: {e}", self.path.display())))?;
        self.next_seq += 1;
        Ok(())
    }
}
