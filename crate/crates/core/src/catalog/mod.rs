//! Prompt templates and routing.
//!
//! Template bodies live in `templates/*.txt` with `[UPPER-KEBAB]` slot
//! markers. Rendering is a single pass over the body, so slot values that
//! happen to contain bracketed text are never re-expanded.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crash::{BugCategory, CrashDescription, InformationLevel};
use crate::engine::{Phase, StrategyConfig};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("slot [{0}] cannot be filled")]
    MissingSlot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemplateId {
    Basic1,
    Basic2,
    Basic3,
    Basic4,
    MultiSolution,
    RolePlay,
    ChainOfThought,
    NewSolution,
    Refinement,
    Version,
    ActiveQ,
    AskOneQ,
}

impl TemplateId {
    pub const ALL: [TemplateId; 12] = [
        TemplateId::Basic1,
        TemplateId::Basic2,
        TemplateId::Basic3,
        TemplateId::Basic4,
        TemplateId::MultiSolution,
        TemplateId::RolePlay,
        TemplateId::ChainOfThought,
        TemplateId::NewSolution,
        TemplateId::Refinement,
        TemplateId::Version,
        TemplateId::ActiveQ,
        TemplateId::AskOneQ,
    ];

    /// The description template for an information level.
    pub fn for_level(level: InformationLevel) -> TemplateId {
        match level {
            InformationLevel::L1CodeOnly => TemplateId::Basic1,
            InformationLevel::L2CodePlusInfo => TemplateId::Basic2,
            InformationLevel::L3FullDescription => TemplateId::Basic3,
            InformationLevel::L4FullPlusLoc => TemplateId::Basic4,
        }
    }

    pub fn is_description(self) -> bool {
        matches!(
            self,
            TemplateId::Basic1 | TemplateId::Basic2 | TemplateId::Basic3 | TemplateId::Basic4
        )
    }

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateId::Basic1 => "basic-prompt-1.txt",
            TemplateId::Basic2 => "basic-prompt-2.txt",
            TemplateId::Basic3 => "basic-prompt-3.txt",
            TemplateId::Basic4 => "basic-prompt-4.txt",
            TemplateId::MultiSolution => "multi-solution.txt",
            TemplateId::RolePlay => "role-play.txt",
            TemplateId::ChainOfThought => "chain-of-thought.txt",
            TemplateId::NewSolution => "new-solution.txt",
            TemplateId::Refinement => "refinement.txt",
            TemplateId::Version => "version.txt",
            TemplateId::ActiveQ => "active-q.txt",
            TemplateId::AskOneQ => "ask-one-q.txt",
        }
    }

    fn source(self) -> &'static str {
        match self {
            TemplateId::Basic1 => include_str!("../../templates/basic-prompt-1.txt"),
            TemplateId::Basic2 => include_str!("../../templates/basic-prompt-2.txt"),
            TemplateId::Basic3 => include_str!("../../templates/basic-prompt-3.txt"),
            TemplateId::Basic4 => include_str!("../../templates/basic-prompt-4.txt"),
            TemplateId::MultiSolution => include_str!("../../templates/multi-solution.txt"),
            TemplateId::RolePlay => include_str!("../../templates/role-play.txt"),
            TemplateId::ChainOfThought => include_str!("../../templates/chain-of-thought.txt"),
            TemplateId::NewSolution => include_str!("../../templates/new-solution.txt"),
            TemplateId::Refinement => include_str!("../../templates/refinement.txt"),
            TemplateId::Version => include_str!("../../templates/version.txt"),
            TemplateId::ActiveQ => include_str!("../../templates/active-q.txt"),
            TemplateId::AskOneQ => include_str!("../../templates/ask-one-q.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateId::Basic1 => "Basic-Prompt-1",
            TemplateId::Basic2 => "Basic-Prompt-2",
            TemplateId::Basic3 => "Basic-Prompt-3",
            TemplateId::Basic4 => "Basic-Prompt-4",
            TemplateId::MultiSolution => "Multi-Solution-Prompt",
            TemplateId::RolePlay => "Role-Play-Prompt",
            TemplateId::ChainOfThought => "Chain-of-Thought-Prompt",
            TemplateId::NewSolution => "New-Solution-Prompt",
            TemplateId::Refinement => "Refinement-Prompt",
            TemplateId::Version => "Version-Prompt",
            TemplateId::ActiveQ => "ActiveQ-Prompt",
            TemplateId::AskOneQ => "AskOneQ-Prompt",
        })
    }
}

/// Appended to the localization turn of code-related sessions.
pub const LOCALIZATION_CLAUSE: &str = include_str!("../../templates/localize-clause.txt");
/// Default `[EXAMPLE]` for the active-inquiry prompt.
pub const DEFAULT_INQUIRY_EXAMPLE: &str = include_str!("../../templates/active-q-example.txt");

pub const SLOT_CODE: &str = "B-CODE";
pub const SLOT_INFO: &str = "CRA-INFO";
pub const SLOT_CONTEXT: &str = "CRA-CONT";
pub const SLOT_DESCRIPTION: &str = "CRA-DES";
pub const SLOT_LOC: &str = "LOC";
pub const SLOT_ROLE_PLAY: &str = "ROLE-PLAY-PROMPT";
pub const SLOT_ASK_ONE: &str = "ASKONEQ-PROMPT";
pub const SLOT_EXAMPLE: &str = "EXAMPLE";
pub const SLOT_LIBRARY: &str = "LIBRARY-1";
pub const SLOT_OTHER_LIBRARY: &str = "LIBRARY-2";

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[([A-Z0-9]+(?:-[A-Z0-9]+)*)\]").unwrap());

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: &'static str,
    pub slots: Vec<String>,
    /// Where the template is routed.
    pub applicability: Vec<(BugCategory, Phase)>,
    /// Slot with the clause to drop when that slot has no value.
    optional: Option<(&'static str, &'static str)>,
}

impl PromptTemplate {
    fn load(id: TemplateId) -> Self {
        use BugCategory::*;
        use Phase::*;
        let body = id.source();
        let mut slots: Vec<String> = Vec::new();
        for caps in PLACEHOLDER.captures_iter(body) {
            let name = caps[1].to_string();
            if !slots.contains(&name) {
                slots.push(name);
            }
        }
        let applicability = match id {
            TemplateId::Basic1 | TemplateId::Basic2 | TemplateId::Basic3 => vec![
                (CodeRelated, SolutionGeneration),
                (EnvironmentRelated, SolutionGeneration),
                (EnvironmentRelated, ContextCompletion),
            ],
            TemplateId::Basic4 => vec![
                (CodeRelated, SolutionGeneration),
                (EnvironmentRelated, SolutionGeneration),
            ],
            TemplateId::MultiSolution | TemplateId::ChainOfThought => {
                vec![(EnvironmentRelated, SolutionGeneration), (CodeRelated, SolutionGeneration)]
            }
            TemplateId::RolePlay => vec![
                (EnvironmentRelated, ContextCompletion),
                (EnvironmentRelated, SolutionGeneration),
                (CodeRelated, SolutionGeneration),
            ],
            TemplateId::ActiveQ | TemplateId::AskOneQ => vec![(EnvironmentRelated, ContextCompletion)],
            TemplateId::Version => vec![(EnvironmentRelated, SolutionGeneration)],
            TemplateId::Refinement => vec![
                (EnvironmentRelated, SolutionGeneration),
                (CodeRelated, SolutionGeneration),
                (EnvironmentRelated, Validation),
                (CodeRelated, Validation),
            ],
            TemplateId::NewSolution => vec![(EnvironmentRelated, Validation), (CodeRelated, Validation)],
        };
        let optional = (id == TemplateId::Version).then_some((SLOT_OTHER_LIBRARY, "/ [LIBRARY-2] version"));
        PromptTemplate {
            id,
            body,
            slots,
            applicability,
            optional,
        }
    }
}

/// A template with every slot filled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template_id: TemplateId,
    pub text: String,
    pub filled_slots: BTreeMap<String, String>,
}

/// The immutable set of templates.
#[derive(Debug)]
pub struct Catalog {
    templates: Vec<PromptTemplate>,
}

static CATALOG: LazyLock<Catalog> = LazyLock::new(|| Catalog {
    templates: TemplateId::ALL.iter().map(|&id| PromptTemplate::load(id)).collect(),
});

impl Catalog {
    pub fn global() -> &'static Catalog {
        &CATALOG
    }

    pub fn template(&self, id: TemplateId) -> &PromptTemplate {
        self.templates
            .iter()
            .find(|t| t.id == id)
            .expect("catalog holds every template id")
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }
}

/// Slot values derivable from a description.
fn derived_slot(name: &str, d: &CrashDescription) -> Option<String> {
    match name {
        SLOT_CODE => d.buggy_code.as_ref().map(|c| c.text.clone()),
        SLOT_INFO => d.crash_info.as_ref().map(|i| i.raw.clone()),
        SLOT_CONTEXT => d.crash_context.clone(),
        SLOT_DESCRIPTION => {
            let parts: Vec<&str> = [
                d.crash_context.as_deref(),
                d.buggy_code.as_ref().map(|c| c.text.as_str()),
                d.crash_info.as_ref().map(|i| i.raw.as_str()),
            ]
            .into_iter()
            .flatten()
            .collect();
            (!parts.is_empty()).then(|| parts.join("\n"))
        }
        SLOT_LOC => {
            let code = d.buggy_code.as_ref()?;
            let lines = d.loc_lines.as_ref()?;
            Some(render_loc(code.text.as_str(), lines))
        }
        SLOT_ROLE_PLAY => Some(TemplateId::RolePlay.source().to_string()),
        SLOT_ASK_ONE => Some(TemplateId::AskOneQ.source().to_string()),
        SLOT_EXAMPLE => Some(DEFAULT_INQUIRY_EXAMPLE.to_string()),
        _ => None,
    }
}

/// Renders line references as `line N: <source line>`, one per line.
pub fn render_loc(code: &str, lines: &[u32]) -> String {
    lines
        .iter()
        .map(|&n| {
            let src = (n >= 1)
                .then(|| code.lines().nth(n as usize - 1))
                .flatten()
                .unwrap_or("")
                .trim();
            format!("line {n}: {src}")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Fills a template from a description plus explicit slot values.
/// Values in `extras` take precedence over derived ones.
pub fn render(
    id: TemplateId,
    description: &CrashDescription,
    extras: &BTreeMap<String, String>,
) -> Result<RenderedPrompt, CatalogError> {
    let template = Catalog::global().template(id);
    let mut body = template.body.to_string();
    let mut filled = BTreeMap::new();

    for slot in &template.slots {
        let value = extras
            .get(slot)
            .cloned()
            .or_else(|| derived_slot(slot, description));
        match value {
            Some(v) => {
                filled.insert(slot.clone(), v);
            }
            None => match template.optional {
                Some((optional, clause)) if optional == slot => {
                    body = body.replace(clause, "");
                }
                _ => return Err(CatalogError::MissingSlot(slot.clone())),
            },
        }
    }

    let text = PLACEHOLDER
        .replace_all(&body, |caps: &regex::Captures<'_>| {
            filled
                .get(&caps[1])
                .cloned()
                .unwrap_or_else(|| caps[0].to_string())
        })
        .into_owned();
    Ok(RenderedPrompt {
        template_id: id,
        text,
        filled_slots: filled,
    })
}

/// Which turn of a session a prompt is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Turn {
    /// The first message of a session.
    Opener,
    /// The model gave a rough solution.
    RoughSolution { version_issue: bool },
    /// A code-related session has a confirmed faulty line.
    AfterLocalization,
    /// The user reported that the presented solution did not fix the crash.
    ValidationFailed,
    /// The user asked for more detail on the presented solutions.
    RefinementRequested,
    /// The user asked for different solutions without validating.
    NewSolutionRequested,
    /// The model asked more than one question at once.
    QuestionCorrection,
}

/// Picks the ordered templates for a turn. Description templates for
/// openers are added by the caller according to the strategy's level, unless
/// a description template is already in the list.
pub fn select_templates(
    category: BugCategory,
    phase: Phase,
    strategy: &StrategyConfig,
    turn: Turn,
) -> Vec<TemplateId> {
    use TemplateId::*;
    let mut ids = match (turn, phase) {
        (_, Phase::Terminal) => return Vec::new(),
        (Turn::Opener, Phase::ContextCompletion) => vec![RolePlay, ActiveQ, AskOneQ],
        (Turn::Opener, _) => match category {
            BugCategory::CodeRelated if !strategy.single_round => vec![TemplateId::for_level(strategy.level)],
            _ => {
                let mut v = if strategy.opener_templates.is_empty() {
                    vec![RolePlay]
                } else {
                    strategy.opener_templates.clone()
                };
                v.dedup();
                v
            }
        },
        (Turn::QuestionCorrection, _) => vec![AskOneQ],
        (Turn::RoughSolution { version_issue }, _) => {
            if version_issue && category == BugCategory::EnvironmentRelated {
                vec![Version]
            } else {
                vec![Refinement]
            }
        }
        (Turn::AfterLocalization, _) => vec![Basic4],
        (Turn::ValidationFailed | Turn::NewSolutionRequested, _) => vec![NewSolution],
        (Turn::RefinementRequested, _) => vec![Refinement],
    };
    if strategy.role_play_every_turn && turn != Turn::Opener && !ids.contains(&RolePlay) {
        ids.insert(0, RolePlay);
    }
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crash::{BuggyCode, CrashInfo, Language};

    fn desc(code: Option<&str>, info: Option<&str>, ctx: Option<&str>) -> CrashDescription {
        CrashDescription {
            buggy_code: code.map(|t| BuggyCode {
                text: t.into(),
                language: Language::Java,
            }),
            crash_info: info.map(|r| CrashInfo {
                exception_type: String::new(),
                error_message: String::new(),
                frames: vec![],
                raw: r.into(),
            }),
            crash_context: ctx.map(str::to_string),
            loc_lines: None,
        }
    }

    #[test]
    fn basic2_example() {
        let d = desc(
            Some("int x=1/0;"),
            Some("java.lang.ArithmeticException: / by zero"),
            None,
        );
        let r = render(TemplateId::Basic2, &d, &BTreeMap::new()).unwrap();
        assert_eq!(
            r.text,
            "This is my code: int x=1/0; I'm getting java.lang.ArithmeticException: / by zero, how do I fix it?"
        );
        assert_eq!(r.filled_slots.len(), 2);
    }

    #[test]
    fn zero_slot_template() {
        let r = render(TemplateId::MultiSolution, &CrashDescription::default(), &BTreeMap::new()).unwrap();
        assert_eq!(r.text, "Please show me all potential solutions.");
        assert!(r.filled_slots.is_empty());
    }

    #[test]
    fn basic3_needs_context() {
        let d = desc(Some("x"), Some("y"), None);
        assert_eq!(
            render(TemplateId::Basic3, &d, &BTreeMap::new()).unwrap_err(),
            CatalogError::MissingSlot("CRA-CONT".into())
        );
    }

    #[test]
    fn description_slot_order() {
        let d = desc(Some("CODE"), Some("INFO"), Some("CTX"));
        let mut d4 = d.clone();
        d4.buggy_code.as_mut().unwrap().text = "a\nb;\n".into();
        d4.loc_lines = Some(vec![2]);
        let r = render(TemplateId::Basic4, &d4, &BTreeMap::new()).unwrap();
        assert_eq!(r.text, "CTX\na\nb;\n\nINFO This is my error lines: line 2: b; how to fix it?");
        let r = render(TemplateId::Basic4, &d, &BTreeMap::from([("LOC".to_string(), "line 1: CODE".to_string())])).unwrap();
        assert!(r.text.starts_with("CTX\nCODE\nINFO "));
    }

    #[test]
    fn version_without_second_library() {
        let extras = BTreeMap::from([(SLOT_LIBRARY.to_string(), "Smack".to_string())]);
        let r = render(TemplateId::Version, &CrashDescription::default(), &extras).unwrap();
        assert_eq!(r.text, "Which version of Smack is compatible with my project?");
        assert!(render(TemplateId::Version, &CrashDescription::default(), &BTreeMap::new()).is_err());
    }

    #[test]
    fn slot_values_are_not_reexpanded() {
        let d = desc(Some("int[] a = new int[LOC];"), Some("[CRA-CONT]"), None);
        let r = render(TemplateId::Basic2, &d, &BTreeMap::new()).unwrap();
        assert!(r.text.contains("new int[LOC];"));
        assert!(r.text.contains("getting [CRA-CONT],"));
    }

    #[test]
    fn slots_match_placeholders() {
        for t in Catalog::global().templates() {
            let markers: Vec<String> = PLACEHOLDER
                .captures_iter(t.body)
                .map(|c| c[1].to_string())
                .collect();
            for m in &markers {
                assert!(t.slots.contains(m), "{:?} misses {m}", t.id);
            }
            for s in &t.slots {
                assert!(markers.contains(s), "{:?} lists unused {s}", t.id);
            }
        }
    }

    #[test]
    fn routing_examples() {
        let guided = StrategyConfig::guided();
        assert_eq!(
            select_templates(BugCategory::EnvironmentRelated, Phase::ContextCompletion, &guided, Turn::Opener),
            vec![TemplateId::RolePlay, TemplateId::ActiveQ, TemplateId::AskOneQ]
        );
        let s = StrategyConfig::default();
        assert_eq!(
            select_templates(BugCategory::CodeRelated, Phase::SolutionGeneration, &s, Turn::AfterLocalization),
            vec![TemplateId::Basic4]
        );
        assert_eq!(
            select_templates(
                BugCategory::EnvironmentRelated,
                Phase::SolutionGeneration,
                &s,
                Turn::RoughSolution { version_issue: true }
            ),
            vec![TemplateId::Version]
        );
        assert_eq!(
            select_templates(
                BugCategory::EnvironmentRelated,
                Phase::SolutionGeneration,
                &s,
                Turn::RoughSolution { version_issue: false }
            ),
            vec![TemplateId::Refinement]
        );
        assert_eq!(
            select_templates(BugCategory::CodeRelated, Phase::Validation, &s, Turn::ValidationFailed),
            vec![TemplateId::NewSolution]
        );
    }

    #[test]
    fn role_play_every_turn() {
        let s = StrategyConfig {
            role_play_every_turn: true,
            ..StrategyConfig::default()
        };
        assert_eq!(
            select_templates(BugCategory::CodeRelated, Phase::Validation, &s, Turn::ValidationFailed),
            vec![TemplateId::RolePlay, TemplateId::NewSolution]
        );
    }
}
