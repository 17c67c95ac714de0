//! Streaming reader for `Posts.xml`.
//!
//! Dumps put one `<row .../>` element per line. Questions carrying an
//! `AcceptedAnswerId` wait in a bounded window until that answer's row shows
//! up; when the window is full the oldest question is emitted without its
//! answer body. Memory therefore depends on the window, not the dump size.

use std::collections::{HashMap, VecDeque};
use std::io::BufRead;
use std::sync::LazyLock;

use quick_xml::events::Event as XmlEvent;
use quick_xml::Reader;
use regex::Regex;

use super::{BenchError, ThreadRecord};

pub const DEFAULT_MAX_PENDING: usize = 10_000;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DumpStats {
    pub lines: u64,
    pub questions: u64,
    pub answers_joined: u64,
    pub malformed: u64,
    /// Largest number of questions held at once.
    pub max_pending: usize,
    /// Questions emitted before their accepted answer was seen.
    pub evicted: u64,
}

pub struct DumpReader<R> {
    input: R,
    line_no: u64,
    buf: String,
    window: usize,
    pending: HashMap<u64, ThreadRecord>,
    /// (answer id, question id) in arrival order.
    order: VecDeque<(u64, u64)>,
    by_answer: HashMap<u64, u64>,
    ready: VecDeque<Result<ThreadRecord, BenchError>>,
    done: bool,
    stats: DumpStats,
}

/// Streams threads out of a dump. Malformed rows come out as
/// `Err(MalformedDump)` items and reading continues; an I/O failure ends the
/// stream after its error.
pub fn parse_dump<R: BufRead>(input: R) -> DumpReader<R> {
    DumpReader::new(input, DEFAULT_MAX_PENDING)
}

impl<R: BufRead> DumpReader<R> {
    pub fn new(input: R, window: usize) -> Self {
        DumpReader {
            input,
            line_no: 0,
            buf: String::new(),
            window: window.max(1),
            pending: HashMap::new(),
            order: VecDeque::new(),
            by_answer: HashMap::new(),
            ready: VecDeque::new(),
            done: false,
            stats: DumpStats::default(),
        }
    }

    pub fn stats(&self) -> &DumpStats {
        &self.stats
    }

    fn malformed(&mut self, reason: impl Into<String>) {
        self.stats.malformed += 1;
        self.ready.push_back(Err(BenchError::MalformedDump {
            line: self.line_no,
            reason: reason.into(),
        }));
    }

    fn release(&mut self, question: u64) {
        if let Some(rec) = self.pending.remove(&question) {
            self.ready.push_back(Ok(rec));
        }
    }

    fn evict_oldest(&mut self) {
        while let Some((answer, question)) = self.order.pop_front() {
            self.by_answer.remove(&answer);
            if self.pending.contains_key(&question) {
                self.stats.evicted += 1;
                self.release(question);
                return;
            }
        }
    }

    fn drain_pending(&mut self) {
        while let Some((answer, question)) = self.order.pop_front() {
            self.by_answer.remove(&answer);
            self.release(question);
        }
    }

    fn handle_line(&mut self) {
        let line = self.buf.trim();
        if line.is_empty() || line.starts_with("<?xml") || line.starts_with("<posts") || line.starts_with("</posts") {
            return;
        }
        if !line.starts_with("<row") {
            self.malformed("expected a <row> element");
            return;
        }
        let attrs = match row_attributes(line) {
            Ok(a) => a,
            Err(reason) => {
                self.malformed(reason);
                return;
            }
        };
        let id = match attrs.get("Id").map(|s| s.parse::<u64>()) {
            Some(Ok(id)) if id > 0 => id,
            Some(_) => {
                self.malformed("Id is not a positive integer");
                return;
            }
            None => {
                self.malformed("row has no Id");
                return;
            }
        };
        match attrs.get("PostTypeId").map(String::as_str) {
            Some("1") => self.question(id, attrs),
            Some("2") => {
                if let Some(question) = self.by_answer.remove(&id) {
                    if let Some(rec) = self.pending.get_mut(&question) {
                        rec.accepted_answer_body = Some(attrs.get("Body").cloned().unwrap_or_default());
                        self.stats.answers_joined += 1;
                    }
                    self.release(question);
                }
            }
            // wiki excerpts, tag wikis and the like
            _ => {}
        }
    }

    fn question(&mut self, id: u64, attrs: HashMap<String, String>) {
        let score = match attrs.get("Score").map(|s| s.parse::<i64>()) {
            Some(Ok(s)) => s,
            None => 0,
            Some(Err(_)) => {
                self.malformed("Score is not an integer");
                return;
            }
        };
        let accepted_answer_id = match attrs.get("AcceptedAnswerId").map(|s| s.parse::<u64>()) {
            Some(Ok(a)) => Some(a),
            None => None,
            Some(Err(_)) => {
                self.malformed("AcceptedAnswerId is not an integer");
                return;
            }
        };
        self.stats.questions += 1;
        let rec = ThreadRecord {
            post_id: id,
            title: attrs.get("Title").cloned().unwrap_or_default(),
            tags: parse_tags(attrs.get("Tags").map(String::as_str).unwrap_or("")),
            score,
            body: attrs.get("Body").cloned().unwrap_or_default(),
            accepted_answer_id,
            accepted_answer_body: None,
            creation_date: attrs.get("CreationDate").cloned().unwrap_or_default(),
        };
        match accepted_answer_id {
            None => self.ready.push_back(Ok(rec)),
            Some(answer) => {
                if self.pending.len() >= self.window {
                    self.evict_oldest();
                }
                self.pending.insert(id, rec);
                self.by_answer.insert(answer, id);
                self.order.push_back((answer, id));
                self.stats.max_pending = self.stats.max_pending.max(self.pending.len());
            }
        }
    }
}

impl<R: BufRead> Iterator for DumpReader<R> {
    type Item = Result<ThreadRecord, BenchError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(item) = self.ready.pop_front() {
                return Some(item);
            }
            if self.done {
                return None;
            }
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => {
                    self.done = true;
                    self.drain_pending();
                }
                Ok(_) => {
                    self.line_no += 1;
                    self.stats.lines += 1;
                    self.handle_line();
                }
                Err(e) => {
                    self.done = true;
                    self.pending.clear();
                    self.order.clear();
                    return Some(Err(BenchError::Io(e)));
                }
            }
        }
    }
}

fn row_attributes(line: &str) -> Result<HashMap<String, String>, String> {
    let mut reader = Reader::from_str(line);
    let element = match reader.read_event() {
        Ok(XmlEvent::Empty(e)) | Ok(XmlEvent::Start(e)) => e,
        Ok(other) => return Err(format!("unexpected {other:?}")),
        Err(e) => return Err(e.to_string()),
    };
    let mut out = HashMap::new();
    for attr in element.attributes() {
        let attr = attr.map_err(|e| e.to_string())?;
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let value = attr.unescape_value().map_err(|e| e.to_string())?.into_owned();
        out.insert(key, value);
    }
    Ok(out)
}

/// Accepts both `<java><android>` and `|java|android|` tag encodings.
fn parse_tags(raw: &str) -> Vec<String> {
    raw.split(['<', '>', '|'])
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<[^>]*>").unwrap());
static BLOCK_END: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)</?(?:p|pre|br|li|div|h\d)\s*/?>").unwrap());

/// Plain text of a post body.
pub fn html_to_text(html: &str) -> String {
    let with_breaks = BLOCK_END.replace_all(html, "\n");
    let stripped = TAG.replace_all(&with_breaks, "");
    stripped
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&nbsp;", " ")
        .replace("&amp;", "&")
}
