//! Stack-trace grammars.
//!
//! Each grammar recognizes one trace family and returns `None` when the text
//! does not look like its format, so grammars can be tried in sequence. The
//! raw fallback never fails.

use std::sync::LazyLock;

use regex::Regex;

use super::{CrashInfo, FrameLanguage, StackFrame};

/// A parser for one family of crash traces.
pub trait TraceGrammar: Send + Sync {
    fn language(&self) -> FrameLanguage;

    /// Parses `raw`, or returns `None` when the text is not in this format.
    fn parse(&self, raw: &str) -> Option<CrashInfo>;
}

static JVM_FRAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*at\s+([^\s(]+)\s*\(([^)]*)\)\s*$").unwrap());
static JVM_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"^\s*(?:Caused by:\s*|Exception in thread "[^"]*"\s+)?([A-Za-z_$][\w$]*(?:\.[A-Za-z_$][\w$]*)*)(?::\s?(.*))?$"#,
    )
    .unwrap()
});
static JVM_CAUSED_BY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*Caused by:\s*(\S+?)(?::\s?(.*))?$").unwrap());
static THROWABLE_SUFFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(Exception|Error|Throwable)$").unwrap());

/// JVM traces: `Type: message` header, `at pkg.Cls.method(File.java:N)` frames,
/// and optional `Caused by:` chains.
#[derive(Debug, Default, Clone, Copy)]
pub struct JvmGrammar;

impl JvmGrammar {
    fn frame(line: &str) -> Option<StackFrame> {
        let caps = JVM_FRAME.captures(line)?;
        let symbol = caps[1].to_string();
        let inner = caps[2].trim();
        let (location, line_no) = match inner.rsplit_once(':') {
            Some((file, num)) => match num.trim().parse::<u32>() {
                Ok(n) if n >= 1 => (file.to_string(), Some(n)),
                _ => (inner.to_string(), None),
            },
            None => (inner.to_string(), None),
        };
        Some(StackFrame {
            symbol,
            location,
            line: line_no,
            language_hint: FrameLanguage::Java,
        })
    }

    fn header(line: &str) -> Option<(String, String)> {
        let caps = JVM_HEADER.captures(line)?;
        let ty = caps.get(1)?.as_str();
        // Headers in the wild are almost always qualified or carry a throwable suffix.
        if !ty.contains('.') && !THROWABLE_SUFFIX.is_match(ty) {
            return None;
        }
        let message = caps.get(2).map(|m| m.as_str().trim().to_string()).unwrap_or_default();
        Some((ty.to_string(), message))
    }
}

impl TraceGrammar for JvmGrammar {
    fn language(&self) -> FrameLanguage {
        FrameLanguage::Java
    }

    fn parse(&self, raw: &str) -> Option<CrashInfo> {
        let lines: Vec<&str> = raw.lines().collect();
        let first_frame = lines.iter().position(|l| JVM_FRAME.is_match(l));

        let (mut exception_type, mut error_message) = match first_frame {
            Some(idx) => lines[..idx]
                .iter()
                .rev()
                .find_map(|l| Self::header(l))
                .unwrap_or_default(),
            None => {
                // A lone header line is still a crash report if the type is unmistakable.
                let (ty, msg) = lines.iter().find_map(|l| Self::header(l))?;
                if !(ty.contains('.') && THROWABLE_SUFFIX.is_match(&ty)) {
                    return None;
                }
                (ty, msg)
            }
        };

        let mut frames = Vec::new();
        for line in &lines {
            if let Some(frame) = Self::frame(line) {
                frames.push(frame);
            } else if let Some(caps) = JVM_CAUSED_BY.captures(line) {
                // The innermost cause is the last one printed.
                exception_type = caps[1].to_string();
                error_message = caps
                    .get(2)
                    .map(|m| m.as_str().trim().to_string())
                    .unwrap_or_default();
            }
        }
        Some(CrashInfo {
            exception_type,
            error_message,
            frames,
            raw: raw.to_string(),
        })
    }
}

static PY_FRAME: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^\s*File "([^"]+)", line (\d+)(?:, in (.+))?\s*$"#).unwrap());
static PY_EXCEPTION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^([A-Za-z_][\w]*(?:\.[A-Za-z_][\w]*)*)(?::\s?(.*))?$").unwrap()
});

/// Interpreter tracebacks introduced by `Traceback (most recent call last):`.
#[derive(Debug, Default, Clone, Copy)]
pub struct TracebackGrammar;

impl TraceGrammar for TracebackGrammar {
    fn language(&self) -> FrameLanguage {
        FrameLanguage::Python
    }

    fn parse(&self, raw: &str) -> Option<CrashInfo> {
        if !raw.contains("Traceback (most recent call last):") {
            return None;
        }
        let mut frames = Vec::new();
        let mut exception_type = String::new();
        let mut error_message = String::new();
        let mut in_traceback = false;
        for line in raw.lines() {
            if line.trim_start().starts_with("Traceback (most recent call last):") {
                in_traceback = true;
                continue;
            }
            if let Some(caps) = PY_FRAME.captures(line) {
                let Ok(n) = caps[2].parse::<u32>() else { continue };
                frames.push(StackFrame {
                    symbol: caps
                        .get(3)
                        .map(|m| m.as_str().trim().to_string())
                        .unwrap_or_else(|| "<module>".to_string()),
                    location: caps[1].to_string(),
                    line: (n >= 1).then_some(n),
                    language_hint: FrameLanguage::Python,
                });
                continue;
            }
            // The exception line is the first unindented line after the frames.
            if in_traceback && !line.starts_with(char::is_whitespace) && !line.is_empty() {
                if let Some(caps) = PY_EXCEPTION.captures(line.trim_end()) {
                    exception_type = caps[1].to_string();
                    error_message = caps
                        .get(2)
                        .map(|m| m.as_str().trim().to_string())
                        .unwrap_or_default();
                }
                in_traceback = false;
            }
        }
        Some(CrashInfo {
            exception_type,
            error_message,
            frames,
            raw: raw.to_string(),
        })
    }
}

/// Accepts anything; keeps the raw text with no structure.
#[derive(Debug, Default, Clone, Copy)]
pub struct RawFallback;

impl TraceGrammar for RawFallback {
    fn language(&self) -> FrameLanguage {
        FrameLanguage::Unknown
    }

    fn parse(&self, raw: &str) -> Option<CrashInfo> {
        Some(CrashInfo {
            exception_type: String::new(),
            error_message: String::new(),
            frames: Vec::new(),
            raw: raw.to_string(),
        })
    }
}

/// The grammars to try for a hint, hinted grammar first.
pub(crate) fn grammars_for(hint: FrameLanguage) -> [&'static dyn TraceGrammar; 3] {
    static JVM: JvmGrammar = JvmGrammar;
    static PY: TracebackGrammar = TracebackGrammar;
    static RAW: RawFallback = RawFallback;
    match hint {
        FrameLanguage::Python => [&PY, &JVM, &RAW],
        _ => [&JVM, &PY, &RAW],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jvm_frame_without_line_number() {
        let f = JvmGrammar::frame("\tat java.lang.Thread.run(Native Method)").unwrap();
        assert_eq!(f.symbol, "java.lang.Thread.run");
        assert_eq!(f.location, "Native Method");
        assert_eq!(f.line, None);
    }

    #[test]
    fn jvm_rejects_prose() {
        assert!(JvmGrammar.parse("Error: something went wrong").is_none());
        assert!(JvmGrammar.parse("hello world").is_none());
    }

    #[test]
    fn jvm_thread_prefix() {
        let info = JvmGrammar
            .parse("Exception in thread \"main\" java.lang.IllegalStateException: boom\n\tat A.b(A.java:2)")
            .unwrap();
        assert_eq!(info.exception_type, "java.lang.IllegalStateException");
        assert_eq!(info.error_message, "boom");
    }

    #[test]
    fn traceback_module_level_frame() {
        let info = TracebackGrammar
            .parse("Traceback (most recent call last):\n  File \"m.py\", line 1\nKeyError")
            .unwrap();
        assert_eq!(info.frames[0].symbol, "<module>");
        assert_eq!(info.exception_type, "KeyError");
        assert_eq!(info.error_message, "");
    }
}
