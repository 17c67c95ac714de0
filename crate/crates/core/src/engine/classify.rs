//! Rule-based reading of model responses: question or solution, how many
//! solutions, and whether a solution is about library or platform versions.

use std::sync::LazyLock;

use regex::Regex;

use super::{Annotation, EngineError, Solution, SolutionKind};

static QUESTION_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?im)\b(?:my|the|one)\s+(?:(?:first|next|second|third|final|last|follow-up|main|key)\s+)?question\s+(?:is|would be)\s*:|^\s*question(?:\s*\d+)?\s*:",
    )
    .unwrap()
});

static NUMBERED_STEP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^\s*(?:\d+[.)]|step\s+\d+\s*[:.)-]?)\s+\S").unwrap());
static VERSION_LITERAL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b\d+\.\d+\.\d+|[:@]v?\d+\.\d+|\b(?:version|to|v)\s*\d+(?:\.\d+)+\b").unwrap()
});
static FILE_OR_COMMAND: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)`|\b[\w-]+\.(?:gradle|kts|xml|java|py|properties|json|ya?ml|toml|cfg|ini|jar|so|dll|manifest|txt)\b|\b(?:mvn|gradlew?|pip3?|npm|yarn|apt(?:-get)?|brew|conda|sudo|chmod|adb|export|set)\s+\S",
    )
    .unwrap()
});
static FIX_LANGUAGE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:try|fix|fixes|update|upgrade|downgrade|change|check|ensure|make sure|use|using|add|remove|replace|install|configure|set|should|could|might|recommend|suggest|solution|solve|resolve|avoid|instead|cause[ds]?|because)\b",
    )
    .unwrap()
});
static VERSION_TALK: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:upgrad|downgrad)\w*|\bversions?\b|\bjdk\s*\d|\bapi level\b").unwrap()
});
static LIST_ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\s*)(?:\d+[.)]|[-*•])\s+(\S.*)$").unwrap());
static STEP_LEAD_IN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\bsteps?\b|\bfollow(?:ing)? these\b|\bdo the following\b").unwrap()
});
static ALTERNATIVES_LEAD_IN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:solutions|options|alternatives|approaches|ways|possibilities|possible|causes|fixes)\b")
        .unwrap()
});
static STEP_ITEM: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)^step\s+\d+").unwrap());

const CLOSERS: &[char] = &['"', '\'', '”', '’', ')', '*', '_', '`'];

fn strip_closers(text: &str) -> &str {
    text.trim_end().trim_end_matches(CLOSERS).trim_end()
}

/// Annotates an assistant response.
///
/// A response is a question when its final sentence ends with `?` or it
/// carries an explicit marker such as "My first question is:". Otherwise it
/// is a detailed solution when it has concrete steps (numbered steps,
/// version literals, file or command references), a rough solution when it
/// talks about fixing, and `Other` when neither.
pub fn classify_response(text: &str) -> Result<Annotation, EngineError> {
    if text.trim().is_empty() {
        return Err(EngineError::EmptyResponse);
    }
    if strip_closers(text).ends_with('?') || QUESTION_MARKER.is_match(text) {
        return Ok(Annotation::Question);
    }
    if is_detailed(text) {
        Ok(Annotation::DetailedSolution)
    } else if FIX_LANGUAGE.is_match(text) {
        Ok(Annotation::RoughSolution)
    } else {
        Ok(Annotation::Other)
    }
}

fn is_detailed(text: &str) -> bool {
    NUMBERED_STEP.is_match(text) || VERSION_LITERAL.is_match(text) || FILE_OR_COMMAND.is_match(text)
}

/// Counts interrogative sentences; `ok` when there is exactly one.
pub fn enforce_single_question(text: &str) -> (bool, usize) {
    let chars: Vec<char> = text.chars().collect();
    let mut count = 0;
    for (i, &c) in chars.iter().enumerate() {
        if c != '?' {
            continue;
        }
        // "??" and "?!" end one sentence.
        let rest = chars[i + 1..].iter().skip_while(|&&n| n == '?' || n == '!');
        let ends_sentence = rest
            .clone()
            .find(|&&n| !CLOSERS.contains(&n))
            .is_none_or(|n| n.is_whitespace());
        let doubled = i > 0 && (chars[i - 1] == '?' || chars[i - 1] == '!');
        if ends_sentence && !doubled {
            count += 1;
        }
    }
    (count == 1, count)
}

/// Whether text talks about library or platform versions.
pub fn mentions_version(text: &str) -> bool {
    VERSION_TALK.is_match(text) || VERSION_LITERAL.is_match(text)
}

/// Splits a solution response into its distinct fixes.
///
/// Top-level list items count as separate solutions unless the lead-in
/// announces steps of one fix. Alternatives joined by "or" inside one item
/// stay one solution. Prose without a list is one solution.
pub fn extract_solutions(text: &str) -> Vec<Solution> {
    let mut items: Vec<(usize, Vec<String>)> = Vec::new();
    let mut lead_in = String::new();
    let mut in_fence = false;
    let mut top_indent: Option<usize> = None;

    let lines: Vec<&str> = text.lines().collect();
    // The top-level indent is the smallest indent of any list item outside code fences.
    for line in &lines {
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
            continue;
        }
        if in_fence {
            continue;
        }
        if let Some(caps) = LIST_ITEM.captures(line) {
            let indent = caps[1].chars().count();
            top_indent = Some(top_indent.map_or(indent, |t: usize| t.min(indent)));
        }
    }

    in_fence = false;
    for line in &lines {
        let fence = line.trim_start().starts_with("```");
        if !in_fence && !fence {
            if let Some(caps) = LIST_ITEM.captures(line) {
                if Some(caps[1].chars().count()) == top_indent {
                    items.push((caps[1].len(), vec![caps[2].to_string()]));
                    continue;
                }
            }
        }
        if fence {
            in_fence = !in_fence;
        }
        match items.last_mut() {
            Some((_, body)) => body.push(line.to_string()),
            None => {
                lead_in.push_str(line);
                lead_in.push('\n');
            }
        }
    }

    let steps_of_one_fix = !items.is_empty()
        && ((STEP_LEAD_IN.is_match(&lead_in) && !ALTERNATIVES_LEAD_IN.is_match(&lead_in))
            || items.iter().all(|(_, b)| STEP_ITEM.is_match(&b[0])));

    let texts: Vec<String> = if items.is_empty() || steps_of_one_fix {
        vec![text.trim().to_string()]
    } else {
        items
            .into_iter()
            .map(|(_, body)| body.join("\n").trim().to_string())
            .collect()
    };

    texts
        .into_iter()
        .enumerate()
        .map(|(i, t)| Solution {
            kind: if is_detailed(&t) {
                SolutionKind::Detailed
            } else {
                SolutionKind::Rough
            },
            version_issue: mentions_version(&t),
            index: i as u32 + 1,
            text: t,
        })
        .collect()
}

static MAVEN_COORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b([A-Za-z][\w.-]*?)[:@]v?\d+\.\d+").unwrap());
static NAMED_LIBRARY: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b([A-Z][\w.+-]*)\s+(?:library|libraries|version|dependency|SDK|sdk|plugin|framework)\b").unwrap()
});
static UPGRADE_TARGET: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:upgrade|downgrade|update)\s+(?:the\s+|your\s+)?([A-Za-z][\w.-]*)").unwrap()
});
const NOT_A_LIBRARY: &[&str] = &["the", "your", "a", "an", "this", "that", "to", "it", "version", "java", "The", "This"];

/// Best guess at the library a version-related solution is about.
pub fn library_mentioned(text: &str) -> Option<String> {
    let candidates = NAMED_LIBRARY
        .captures_iter(text)
        .chain(MAVEN_COORD.captures_iter(text))
        .chain(UPGRADE_TARGET.captures_iter(text))
        .map(|c| c[1].trim_end_matches(['.', '-']).to_string());
    candidates
        .into_iter()
        .find(|c| !c.is_empty() && !NOT_A_LIBRARY.contains(&c.as_str()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smack_question() {
        assert_eq!(
            classify_response(
                "My first question is: What is the version of the Smack library that you are using in this project?"
            )
            .unwrap(),
            Annotation::Question
        );
    }

    #[test]
    fn smack_detailed_solution() {
        assert_eq!(
            classify_response(
                "To fix this issue, you can try using a Smack library version that is specifically designed for Android, such as smack-android:4.4.4."
            )
            .unwrap(),
            Annotation::DetailedSolution
        );
    }

    #[test]
    fn empty_response() {
        assert!(matches!(classify_response("   "), Err(EngineError::EmptyResponse)));
    }

    #[test]
    fn marker_without_question_mark() {
        assert_eq!(
            classify_response("Before I can help. My next question is: tell me your Gradle setup.").unwrap(),
            Annotation::Question
        );
    }

    #[test]
    fn rough_and_other() {
        assert_eq!(
            classify_response("It looks like a dependency conflict; you should check your dependencies.").unwrap(),
            Annotation::RoughSolution
        );
        assert_eq!(classify_response("Thanks for the details.").unwrap(), Annotation::Other);
    }

    #[test]
    fn single_question_counts() {
        assert_eq!(enforce_single_question("What is your OS?"), (true, 1));
        assert_eq!(enforce_single_question("What OS? What Java version?"), (false, 2));
        assert_eq!(enforce_single_question("My first question is: your OS."), (false, 0));
        assert_eq!(enforce_single_question("Is it broken?? Tell me."), (true, 1));
    }

    #[test]
    fn two_enumerated_solutions() {
        let sols = extract_solutions("1. Upgrade A to 2.0\n2. Downgrade B to 1.7");
        assert_eq!(sols.len(), 2);
        assert!(sols.iter().all(|s| s.version_issue));
        assert_eq!(sols[0].index, 1);
        assert_eq!(sols[1].index, 2);
        assert_eq!(sols[1].text, "Downgrade B to 1.7");
    }

    #[test]
    fn prose_patch_is_one_solution() {
        let sols = extract_solutions(
            "The array index is off by one. Change the loop to `for (int i = 0; i < arr.length; i++)` so it stops before the end.",
        );
        assert_eq!(sols.len(), 1);
        assert!(!sols[0].version_issue);
    }

    #[test]
    fn inline_alternatives_are_one_solution() {
        let sols = extract_solutions("you can try smack-android-extensions:4.4.4 or smack-android:4.4.4");
        assert_eq!(sols.len(), 1);
        assert!(sols[0].version_issue);
    }

    #[test]
    fn steps_of_one_fix() {
        let sols = extract_solutions(
            "Follow these steps:\n1. Open build.gradle\n2. Replace smack-java7 with smack-android\n3. Sync the project",
        );
        assert_eq!(sols.len(), 1);
        let alts = extract_solutions(
            "Here are some possible solutions:\n1. Open build.gradle\n2. Clear the cache",
        );
        assert_eq!(alts.len(), 2);
    }

    #[test]
    fn nested_items_belong_to_parent() {
        let sols = extract_solutions("- Fix A\n  - detail a1\n  - detail a2\n- Fix B");
        assert_eq!(sols.len(), 2);
        assert!(sols[0].text.contains("detail a2"));
    }

    #[test]
    fn list_inside_fence_ignored() {
        let sols = extract_solutions("Use this config:\n```\n- a: 1\n- b: 2\n```\nThen rebuild.");
        assert_eq!(sols.len(), 1);
    }

    #[test]
    fn library_guess() {
        assert_eq!(library_mentioned("Try another Smack library build.").as_deref(), Some("Smack"));
        assert_eq!(library_mentioned("use smack-android:4.4.4").as_deref(), Some("smack-android"));
        assert_eq!(library_mentioned("You should upgrade slf4j-api.").as_deref(), Some("slf4j-api"));
        assert_eq!(library_mentioned("nothing here"), None);
    }
}
