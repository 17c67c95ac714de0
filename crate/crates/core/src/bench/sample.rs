//! Sampling curated pools into annotation drafts, and pool statistics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::LazyLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{html_to_text, BenchError, ThreadRecord};
use crate::crash::{code_lines, token_count, CaseRecord, CrashBugCase, CrashInfoRecord, JvmGrammar, TraceGrammar};

/// Uniform sample of `n` entries without replacement, in sampled order.
pub fn sample<T: Clone>(pool: &[T], n: usize, seed: u64) -> Result<Vec<T>, BenchError> {
    if n > pool.len() {
        return Err(BenchError::PoolTooSmall {
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect())
}

static PRE_BLOCK: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<pre\b[^>]*>(.*?)</pre>").unwrap());

/// Case draft for a thread. Category and ground truth stay empty for the
/// annotators; code and trace come from the body's `<pre>` blocks.
pub fn draft_case(thread: &ThreadRecord) -> CaseRecord {
    let mut code = None;
    let mut trace = None;
    for caps in PRE_BLOCK.captures_iter(&thread.body) {
        let text = html_to_text(&caps[1]).trim_matches('\n').to_string();
        if trace.is_none() {
            if let Some(info) = JvmGrammar.parse(&text) {
                trace = Some(CrashInfoRecord {
                    exception_type: info.exception_type,
                    error_message: info.error_message,
                    trace_raw: text,
                });
                continue;
            }
        }
        if code.is_none() && !text.trim().is_empty() {
            code = Some(text);
        }
    }
    let prose = html_to_text(&PRE_BLOCK.replace_all(&thread.body, "\n"));
    let prose = prose
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    let context = if prose.is_empty() {
        thread.title.clone()
    } else {
        format!("{}\n{}", thread.title, prose)
    };
    CaseRecord {
        id: format!("so-{}", thread.post_id),
        language: "java".into(),
        category: None,
        buggy_code: code,
        crash_info: trace,
        crash_context: Some(context),
        loc_lines: None,
        ground_truth: None,
        source_url: Some(thread.url()),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub cases: usize,
    /// Mean over cases that have buggy code.
    pub mean_code_lines: f64,
    /// Mean over cases that have crash information.
    pub mean_trace_tokens: f64,
    /// Mean over all cases, all three parts together.
    pub mean_description_tokens: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoolStats {
    pub overall: GroupStats,
    pub per_category: BTreeMap<String, GroupStats>,
}

fn mean(values: &[usize]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<usize>() as f64 / values.len() as f64
    }
}

fn group(cases: &[&CrashBugCase]) -> GroupStats {
    let mut code = Vec::new();
    let mut trace = Vec::new();
    let mut desc = Vec::new();
    for c in cases {
        let d = &c.description;
        let mut total = 0;
        if let Some(b) = &d.buggy_code {
            code.push(code_lines(&b.text));
            total += token_count(&b.text);
        }
        if let Some(i) = &d.crash_info {
            trace.push(token_count(&i.raw));
            total += token_count(&i.raw);
        }
        if let Some(ctx) = &d.crash_context {
            total += token_count(ctx);
        }
        desc.push(total);
    }
    GroupStats {
        cases: cases.len(),
        mean_code_lines: mean(&code),
        mean_trace_tokens: mean(&trace),
        mean_description_tokens: mean(&desc),
    }
}

pub fn pool_stats(cases: &[CrashBugCase]) -> Result<PoolStats, BenchError> {
    if cases.is_empty() {
        return Err(BenchError::EmptyPool);
    }
    let all: Vec<&CrashBugCase> = cases.iter().collect();
    let mut by_category: BTreeMap<String, Vec<&CrashBugCase>> = BTreeMap::new();
    for c in cases {
        by_category.entry(c.category.as_str().to_string()).or_default().push(c);
    }
    Ok(PoolStats {
        overall: group(&all),
        per_category: by_category.iter().map(|(k, v)| (k.clone(), group(v))).collect(),
    })
}

/// Markdown table, one row per category plus the total.
pub fn render_stats(stats: &PoolStats) -> String {
    let mut out = String::from("| Category | Cases | Buggy code lines | Crash trace tokens | Description tokens |\n");
    out.push_str("|---|---:|---:|---:|---:|\n");
    let rows = stats
        .per_category
        .iter()
        .map(|(k, v)| (k.as_str(), v))
        .chain([("all", &stats.overall)]);
    for (name, g) in rows {
        let _ = writeln!(
            out,
            "| {name} | {} | {:.2} | {:.2} | {:.2} |",
            g.cases, g.mean_code_lines, g.mean_trace_tokens, g.mean_description_tokens
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crash::{BugCategory, BuggyCode, CrashDescription, GroundTruth, Language};

    #[test]
    fn whole_pool_is_a_permutation() {
        let pool: Vec<u32> = (0..10).collect();
        let mut s = sample(&pool, 10, 7).unwrap();
        assert_ne!(s, pool);
        s.sort();
        assert_eq!(s, pool);
    }

    #[test]
    fn deterministic_per_seed() {
        let pool: Vec<u32> = (0..100).collect();
        assert_eq!(sample(&pool, 20, 42).unwrap(), sample(&pool, 20, 42).unwrap());
        assert_ne!(sample(&pool, 20, 42).unwrap(), sample(&pool, 20, 43).unwrap());
    }

    #[test]
    fn pool_too_small() {
        let pool: Vec<u32> = (0..100).collect();
        assert!(matches!(
            sample(&pool, 101, 1),
            Err(BenchError::PoolTooSmall {
                requested: 101,
                available: 100
            })
        ));
    }

    #[test]
    fn marginals_are_uniform() {
        // n=3 of 10 over 10k trials: each element expected 3000 times.
        let pool: Vec<usize> = (0..10).collect();
        let mut counts = [0u32; 10];
        for seed in 0..10_000 {
            for x in sample(&pool, 3, seed).unwrap() {
                counts[x] += 1;
            }
        }
        let p: f64 = 0.3;
        let expected = 10_000.0 * p;
        let sigma = (10_000.0 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    fn case(id: &str, lines: usize, cat: BugCategory) -> CrashBugCase {
        CrashBugCase {
            id: id.into(),
            language: Language::Java,
            category: cat,
            description: CrashDescription {
                buggy_code: Some(BuggyCode {
                    text: (0..lines).map(|i| format!("stmt{i};")).collect::<Vec<_>>().join("\n"),
                    language: Language::Java,
                }),
                ..CrashDescription::default()
            },
            ground_truth: GroundTruth::default(),
            source_url: None,
        }
    }

    #[test]
    fn mean_code_lines() {
        let s = pool_stats(&[case("a", 10, BugCategory::CodeRelated), case("b", 20, BugCategory::CodeRelated)]).unwrap();
        assert_eq!(s.overall.mean_code_lines, 15.0);
        assert_eq!(s.per_category["code"].cases, 2);
        assert!(render_stats(&s).contains("| code | 2 | 15.00 |"));
        assert!(matches!(pool_stats(&[]), Err(BenchError::EmptyPool)));
    }

    #[test]
    fn drafts_split_code_and_trace() {
        let t = ThreadRecord {
            post_id: 30322026,
            title: "NoClassDefFoundError with Smack".into(),
            body: "<p>My app crashes.</p><pre><code>connection.connect();</code></pre><pre>java.lang.NoClassDefFoundError: x\n\tat a.B.c(B.java:1)</pre>".into(),
            ..ThreadRecord::default()
        };
        let d = draft_case(&t);
        assert_eq!(d.id, "so-30322026");
        assert_eq!(d.buggy_code.as_deref(), Some("connection.connect();"));
        assert_eq!(d.crash_info.unwrap().exception_type, "java.lang.NoClassDefFoundError");
        assert_eq!(d.crash_context.as_deref(), Some("NoClassDefFoundError with Smack\nMy app crashes."));
        assert!(d.category.is_none() && d.ground_truth.is_none());
    }
}
