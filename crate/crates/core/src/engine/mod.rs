//! The diagnosis session state machine.
//!
//! A session moves through three working phases: context completion (the
//! model asks one question at a time), solution generation (rough answers
//! are refined) and validation (the user reports whether a fix worked, with a
//! bounded number of retries). Each call to [`step`] consumes one event and
//! emits exactly one [`Action`]. States are plain values; stepping never
//! mutates its input.

mod classify;
mod drive;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::LazyLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use drive::{advance, Advance, DriveError};
pub use classify::{
    classify_response, enforce_single_question, extract_solutions, library_mentioned, mentions_version,
};

use crate::catalog::{
    render, select_templates, CatalogError, TemplateId, Turn, LOCALIZATION_CLAUSE, SLOT_LIBRARY, SLOT_LOC,
};
use crate::crash::{project, BugCategory, CrashBugCase, CrashDescription, CrashError, InformationLevel};
use crate::gateway::{ChatMessage, Conversation, Role, TranscriptRecord};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("invalid input: {0}")]
    InvalidInput(#[from] CrashError),
    #[error(transparent)]
    Prompt(#[from] CatalogError),
    #[error("event {event} is not allowed in phase {phase} while {awaiting}")]
    IllegalEvent {
        phase: Phase,
        awaiting: Awaiting,
        event: EventKind,
    },
    #[error("session is terminated")]
    SessionTerminated,
    #[error("empty response")]
    EmptyResponse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    ContextCompletion,
    SolutionGeneration,
    Validation,
    Terminal,
}

impl Phase {
    /// Declared edges: forward along context completion, solution generation
    /// and validation (a detailed answer during context completion reaches
    /// validation in one step), back from validation to solution generation,
    /// and from anywhere to terminal.
    pub fn can_transition(from: Phase, to: Phase) -> bool {
        use Phase::*;
        match (from, to) {
            (Terminal, _) => false,
            (_, Terminal) => true,
            (a, b) if a == b => true,
            (ContextCompletion, SolutionGeneration | Validation) => true,
            (SolutionGeneration, Validation) => true,
            (Validation, SolutionGeneration) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::ContextCompletion => "context_completion",
            Phase::SolutionGeneration => "solution_generation",
            Phase::Validation => "validation",
            Phase::Terminal => "terminal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Annotation {
    Prompt,
    Question,
    RoughSolution,
    DetailedSolution,
    ValidationReport,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
    pub timestamp: DateTime<Utc>,
    pub annotation: Annotation,
    /// Phase after the step that appended this message.
    pub phase: Phase,
    /// Kind of the action emitted by that step.
    pub action: ActionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionKind {
    Rough,
    Detailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub text: String,
    pub kind: SolutionKind,
    pub version_issue: bool,
    /// 1-based position within its response.
    pub index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    InProgress,
    Resolved,
    Unresolved,
    Abandoned,
}

/// How a session talks to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StrategyConfig {
    /// Let the model lead with questions before proposing fixes.
    pub guided_by_llm: bool,
    /// Stop after the first response; no follow-up prompts.
    pub single_round: bool,
    /// How much of the description the opener carries.
    pub level: InformationLevel,
    /// Instruction templates for unguided openers; Role-Play when empty.
    pub opener_templates: Vec<TemplateId>,
    /// Slot values that override derived ones, e.g. `LIBRARY-1` or `EXAMPLE`.
    pub slot_overrides: BTreeMap<String, String>,
    /// Prefix the Role-Play prompt to every turn, not only the opener.
    pub role_play_every_turn: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            guided_by_llm: false,
            single_round: false,
            level: InformationLevel::L3FullDescription,
            opener_templates: Vec::new(),
            slot_overrides: BTreeMap::new(),
            role_play_every_turn: false,
        }
    }
}

impl StrategyConfig {
    pub fn guided() -> Self {
        StrategyConfig {
            guided_by_llm: true,
            ..Self::default()
        }
    }
}

/// Budgets. Stored in the state so a persisted session replays identically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Limits {
    /// Failed validations before the session gives up.
    pub max_retries: u32,
    /// Hard cap on prompts sent.
    pub max_rounds: u32,
    /// Answered questions before context completion hands over to solution generation.
    pub max_questions: u32,
    /// Refinement prompts for a rough answer before it goes to validation as is.
    pub max_refinements: u32,
    /// Allow guided mode for code-related sessions.
    pub allow_guided_code: bool,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_retries: 3,
            max_rounds: 20,
            max_questions: 5,
            max_refinements: 2,
            allow_guided_code: false,
        }
    }
}

/// Where a code-related session stands in its localize-then-repair split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeStage {
    Localizing,
    ConfirmingLocation,
    Repairing,
}

/// A user message ready to send, with the templates it was built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutboundPrompt {
    pub templates: Vec<TemplateId>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    SendPrompt { prompt: OutboundPrompt },
    AwaitUserAnswer { question: String },
    PresentSolutions { solutions: Vec<Solution> },
    AwaitValidation { solution: Solution },
    Finish { outcome: Outcome },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    SendPrompt,
    AwaitUserAnswer,
    PresentSolutions,
    AwaitValidation,
    Finish,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::SendPrompt { .. } => ActionKind::SendPrompt,
            Action::AwaitUserAnswer { .. } => ActionKind::AwaitUserAnswer,
            Action::PresentSolutions { .. } => ActionKind::PresentSolutions,
            Action::AwaitValidation { .. } => ActionKind::AwaitValidation,
            Action::Finish { .. } => ActionKind::Finish,
        }
    }

    /// What the session waits for after this action.
    pub fn awaiting(&self) -> Awaiting {
        match self {
            Action::SendPrompt { .. } => Awaiting::Assistant,
            Action::AwaitUserAnswer { .. } => Awaiting::UserAnswer,
            Action::PresentSolutions { .. } | Action::AwaitValidation { .. } => Awaiting::Validation,
            Action::Finish { .. } => Awaiting::Nothing,
        }
    }
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::SendPrompt => "send_prompt",
            ActionKind::AwaitUserAnswer => "await_user_answer",
            ActionKind::PresentSolutions => "present_solutions",
            ActionKind::AwaitValidation => "await_validation",
            ActionKind::Finish => "finish",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Awaiting {
    Assistant,
    UserAnswer,
    Validation,
    Nothing,
}

impl fmt::Display for Awaiting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Awaiting::Assistant => "awaiting the assistant",
            Awaiting::UserAnswer => "awaiting a user answer",
            Awaiting::Validation => "awaiting validation",
            Awaiting::Nothing => "finished",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserRequest {
    Refine,
    NewSolution,
    Abandon,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    AssistantReply { text: String },
    UserAnswer { text: String },
    ValidationResult { fixed: bool },
    UserRequest { request: UserRequest },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    AssistantReply,
    UserAnswer,
    ValidationResult,
    UserRequest,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::AssistantReply => "assistant_reply",
            EventKind::UserAnswer => "user_answer",
            EventKind::ValidationResult => "validation_result",
            EventKind::UserRequest => "user_request",
        })
    }
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self {
            Event::AssistantReply { .. } => EventKind::AssistantReply,
            Event::UserAnswer { .. } => EventKind::UserAnswer,
            Event::ValidationResult { .. } => EventKind::ValidationResult,
            Event::UserRequest { .. } => EventKind::UserRequest,
        }
    }
}

/// What a session is about.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionInput {
    pub case_id: Option<String>,
    pub description: CrashDescription,
}

impl From<&CrashBugCase> for SessionInput {
    fn from(case: &CrashBugCase) -> Self {
        SessionInput {
            case_id: Some(case.id.clone()),
            description: case.description.clone(),
        }
    }
}

impl From<CrashDescription> for SessionInput {
    fn from(description: CrashDescription) -> Self {
        SessionInput {
            case_id: None,
            description,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub case_id: Option<String>,
    pub description: CrashDescription,
    pub category: BugCategory,
    pub strategy: StrategyConfig,
    pub limits: Limits,
    pub phase: Phase,
    pub conversation: Vec<Message>,
    pub solutions: Vec<Solution>,
    pub validation_attempts: u32,
    pub max_retries: u32,
    pub outcome: Outcome,
    /// Prompts sent so far.
    pub rounds: u32,
    pub questions_asked: u32,
    /// Consecutive refinement prompts without a detailed answer.
    pub refinements: u32,
    pub code_stage: Option<CodeStage>,
    /// Faulty lines proposed by the model during localization.
    pub proposed_loc: Vec<u32>,
    pub last_action: Action,
}

impl SessionState {
    pub fn awaiting(&self) -> Awaiting {
        self.last_action.awaiting()
    }

    /// The conversation in provider form.
    pub fn provider_conversation(&self) -> Conversation {
        Conversation::new(
            self.conversation
                .iter()
                .map(|m| ChatMessage {
                    role: m.role,
                    content: m.text.clone(),
                })
                .collect(),
        )
    }

    /// Transcript records in sequence order. Timestamps are not part of it.
    pub fn transcript(&self) -> Vec<TranscriptRecord> {
        self.conversation
            .iter()
            .enumerate()
            .map(|(i, m)| TranscriptRecord {
                seq: i as u64 + 1,
                role: m.role,
                annotation: Some(m.annotation),
                text: m.text.clone(),
                phase: Some(m.phase),
                action: Some(m.action.as_str().to_string()),
            })
            .collect()
    }

    /// The most recent solution, if any.
    pub fn latest_solution(&self) -> Option<&Solution> {
        self.solutions.last()
    }
}

/// Starts a session and produces its opening prompt.
pub fn start_session(
    session_id: impl Into<String>,
    input: impl Into<SessionInput>,
    category: BugCategory,
    strategy: StrategyConfig,
    limits: Limits,
    at: DateTime<Utc>,
) -> Result<(SessionState, Action), EngineError> {
    let input = input.into();
    input.description.validate()?;
    if limits.max_retries == 0 {
        return Err(EngineError::InvalidStrategy("max_retries must be at least 1".into()));
    }
    if limits.max_rounds == 0 {
        return Err(EngineError::InvalidStrategy("max_rounds must be at least 1".into()));
    }
    if strategy.guided_by_llm && category == BugCategory::CodeRelated && !limits.allow_guided_code {
        return Err(EngineError::InvalidStrategy(
            "guided mode is not enabled for code-related sessions".into(),
        ));
    }
    if strategy.guided_by_llm && strategy.single_round {
        return Err(EngineError::InvalidStrategy(
            "guided sessions need more than one round".into(),
        ));
    }

    let guided = strategy.guided_by_llm;
    let phase = if guided {
        Phase::ContextCompletion
    } else {
        Phase::SolutionGeneration
    };
    let code_stage = (category == BugCategory::CodeRelated && !strategy.single_round && !guided).then(|| {
        if strategy.level == InformationLevel::L4FullPlusLoc {
            CodeStage::Repairing
        } else {
            CodeStage::Localizing
        }
    });

    let mut state = SessionState {
        session_id: session_id.into(),
        case_id: input.case_id,
        description: input.description,
        category,
        max_retries: limits.max_retries,
        strategy,
        limits,
        phase,
        conversation: Vec::new(),
        solutions: Vec::new(),
        validation_attempts: 0,
        outcome: Outcome::InProgress,
        rounds: 0,
        questions_asked: 0,
        refinements: 0,
        code_stage,
        proposed_loc: Vec::new(),
        last_action: Action::Finish {
            outcome: Outcome::InProgress,
        },
    };

    let ids = select_templates(category, phase, &state.strategy, Turn::Opener);
    let prompt = compose_opener(&state, &ids)?;
    let action = Stepper::new(&mut state, at).send(prompt, Annotation::Prompt);
    Ok((state, action))
}

/// Advances a session by one event, timestamping new messages with now.
pub fn step(state: &SessionState, event: Event) -> Result<(SessionState, Action), EngineError> {
    step_at(state, event, Utc::now())
}

/// Advances a session by one event.
pub fn step_at(
    state: &SessionState,
    event: Event,
    at: DateTime<Utc>,
) -> Result<(SessionState, Action), EngineError> {
    if state.phase == Phase::Terminal {
        return Err(EngineError::SessionTerminated);
    }
    let illegal = |event: &Event| EngineError::IllegalEvent {
        phase: state.phase,
        awaiting: state.awaiting(),
        event: event.kind(),
    };
    let mut next = state.clone();
    let action = {
        let mut s = Stepper::new(&mut next, at);
        match (state.awaiting(), &event) {
            (_, Event::UserRequest {
                request: UserRequest::Abandon,
            }) => s.finish(Outcome::Abandoned),
            (Awaiting::Assistant, Event::AssistantReply { text }) => s.on_reply(text)?,
            (Awaiting::UserAnswer, Event::UserAnswer { text }) => s.on_answer(text)?,
            (Awaiting::Validation, Event::ValidationResult { fixed }) => s.on_validation(*fixed)?,
            (Awaiting::Validation, Event::UserRequest { request }) => {
                let turn = match request {
                    UserRequest::Refine => Turn::RefinementRequested,
                    _ => Turn::NewSolutionRequested,
                };
                s.state.phase = Phase::SolutionGeneration;
                s.follow_up(turn, Annotation::Prompt)?
            }
            _ => return Err(illegal(&event)),
        }
    };
    Ok((next, action))
}

fn compose_opener(state: &SessionState, ids: &[TemplateId]) -> Result<OutboundPrompt, EngineError> {
    let extras = &state.strategy.slot_overrides;
    let level = state.strategy.level;
    let description = project(&state.description, level)?;

    let mut templates = ids.to_vec();
    if !templates.iter().any(|t| t.is_description()) {
        templates.push(TemplateId::for_level(level));
    }
    let absorbed: &[TemplateId] = if templates.contains(&TemplateId::ActiveQ) {
        &[TemplateId::RolePlay, TemplateId::AskOneQ]
    } else {
        &[]
    };

    let leads_description = |t: &TemplateId| matches!(t, TemplateId::RolePlay | TemplateId::ActiveQ);
    let mut ordered: Vec<TemplateId> = templates
        .iter()
        .copied()
        .filter(|t| leads_description(t) && !absorbed.contains(t))
        .collect();
    ordered.extend(templates.iter().copied().filter(|t| t.is_description()));
    ordered.extend(
        templates
            .iter()
            .copied()
            .filter(|t| !leads_description(t) && !t.is_description() && !absorbed.contains(t)),
    );

    let mut parts = Vec::with_capacity(ordered.len());
    for id in &ordered {
        let mut text = render(*id, &description, extras)?.text;
        if id.is_description() && state.code_stage == Some(CodeStage::Localizing) {
            text.push(' ');
            text.push_str(LOCALIZATION_CLAUSE);
        }
        parts.push(text);
    }
    Ok(OutboundPrompt {
        templates,
        text: parts.join("\n\n"),
    })
}

static LINE_MENTION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\blines?\s+(\d+)(?:\s*(?:-|to|and|,)\s*(\d+))?").unwrap());
static NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(\d+)\b").unwrap());
static AFFIRMATIVE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:y|yes|yep|ok|okay|correct|confirm(?:ed)?|right|sure|agreed)\b").unwrap()
});

/// Line references the model made into the buggy code: explicit "line N"
/// mentions, otherwise code lines quoted verbatim.
fn proposed_lines(reply: &str, code: &str) -> Vec<u32> {
    let count = code.lines().count() as u32;
    let mut lines: Vec<u32> = LINE_MENTION
        .captures_iter(reply)
        .flat_map(|c| {
            let a: u32 = c[1].parse().unwrap_or(0);
            let b: u32 = c.get(2).and_then(|m| m.as_str().parse().ok()).unwrap_or(a);
            let (lo, hi) = (a.min(b), a.max(b));
            (lo..=hi.min(lo + 10)).collect::<Vec<_>>()
        })
        .filter(|&n| n >= 1 && n <= count)
        .collect();
    if lines.is_empty() {
        lines = code
            .lines()
            .enumerate()
            .filter(|(_, l)| l.trim().len() >= 8 && reply.contains(l.trim()))
            .map(|(i, _)| i as u32 + 1)
            .take(3)
            .collect();
    }
    lines.sort_unstable();
    lines.dedup();
    lines
}

/// Mutation helper for one step.
struct Stepper<'a> {
    state: &'a mut SessionState,
    at: DateTime<Utc>,
    first_new: usize,
}

impl<'a> Stepper<'a> {
    fn new(state: &'a mut SessionState, at: DateTime<Utc>) -> Self {
        let first_new = state.conversation.len();
        Stepper { state, at, first_new }
    }

    fn push(&mut self, role: Role, text: &str, annotation: Annotation) {
        self.state.conversation.push(Message {
            role,
            text: text.to_string(),
            timestamp: self.at,
            annotation,
            phase: self.state.phase,
            action: ActionKind::Finish,
        });
    }

    fn emit(&mut self, action: Action) -> Action {
        let kind = action.kind();
        for m in &mut self.state.conversation[self.first_new..] {
            m.phase = self.state.phase;
            m.action = kind;
        }
        self.state.last_action = action.clone();
        action
    }

    fn finish(&mut self, outcome: Outcome) -> Action {
        self.state.phase = Phase::Terminal;
        self.state.outcome = outcome;
        self.emit(Action::Finish { outcome })
    }

    /// Sends a prompt unless the round cap is reached.
    fn send(&mut self, mut prompt: OutboundPrompt, annotation: Annotation) -> Action {
        if self.state.rounds >= self.state.limits.max_rounds {
            return self.finish(Outcome::Unresolved);
        }
        if self.state.strategy.role_play_every_turn
            && self.state.rounds > 0
            && !prompt.templates.contains(&TemplateId::RolePlay)
        {
            let role_play = render(TemplateId::RolePlay, &CrashDescription::default(), &BTreeMap::new())
                .expect("role-play has no slots");
            prompt.text = format!("{}\n\n{}", role_play.text, prompt.text);
            prompt.templates.insert(0, TemplateId::RolePlay);
        }
        self.push(Role::User, &prompt.text, annotation);
        self.state.rounds += 1;
        self.emit(Action::SendPrompt { prompt })
    }

    /// Renders the templates routed for `turn` and sends them.
    fn follow_up(&mut self, turn: Turn, annotation: Annotation) -> Result<Action, EngineError> {
        let st = &*self.state;
        let mut ids = select_templates(st.category, st.phase, &st.strategy, turn);
        let mut extras = st.strategy.slot_overrides.clone();
        // role_play_every_turn is applied in send()
        ids.retain(|t| *t != TemplateId::RolePlay);

        if ids.contains(&TemplateId::Version) && !extras.contains_key(SLOT_LIBRARY) {
            let library = st
                .solutions
                .iter()
                .rev()
                .find_map(|s| library_mentioned(&s.text))
                .or_else(|| {
                    st.conversation
                        .iter()
                        .rev()
                        .find(|m| m.role == Role::Assistant)
                        .and_then(|m| library_mentioned(&m.text))
                });
            match library {
                Some(lib) => {
                    extras.insert(SLOT_LIBRARY.to_string(), lib);
                }
                None => ids = vec![TemplateId::Refinement],
            }
        }

        let mut description = st.description.clone();
        if turn == Turn::AfterLocalization && !extras.contains_key(SLOT_LOC) && description.loc_lines.is_none() {
            description.loc_lines = Some(st.proposed_loc.clone());
        }
        let parts = ids
            .iter()
            .map(|id| render(*id, &description, &extras).map(|r| r.text))
            .collect::<Result<Vec<_>, _>>()?;
        let prompt = OutboundPrompt {
            templates: ids,
            text: parts.join("\n\n"),
        };
        Ok(self.send(prompt, annotation))
    }

    fn on_reply(&mut self, text: &str) -> Result<Action, EngineError> {
        let annotation = classify_response(text)?;
        self.push(Role::Assistant, text, annotation);

        if self.state.code_stage == Some(CodeStage::Localizing) {
            let code = self
                .state
                .description
                .buggy_code
                .as_ref()
                .map(|c| c.text.clone())
                .unwrap_or_default();
            let proposed = proposed_lines(text, &code);
            let mut question =
                String::from("Which line(s) of the buggy code cause the crash? Reply with line numbers");
            if !proposed.is_empty() {
                question.push_str(", or yes to accept the proposal:\n");
                question.push_str(&crate::catalog::render_loc(&code, &proposed));
            } else {
                question.push('.');
            }
            self.state.proposed_loc = proposed;
            self.state.code_stage = Some(CodeStage::ConfirmingLocation);
            return Ok(self.emit(Action::AwaitUserAnswer { question }));
        }

        if self.state.strategy.single_round {
            let solutions = extract_solutions(text);
            self.state.solutions.extend(solutions.iter().cloned());
            self.state.phase = Phase::Validation;
            return Ok(self.emit(Action::PresentSolutions { solutions }));
        }

        match annotation {
            Annotation::Question => {
                let (single, _) = enforce_single_question(text);
                if !single && self.state.strategy.guided_by_llm && self.state.phase == Phase::ContextCompletion {
                    return self.follow_up(Turn::QuestionCorrection, Annotation::Prompt);
                }
                self.state.questions_asked += 1;
                Ok(self.emit(Action::AwaitUserAnswer {
                    question: text.to_string(),
                }))
            }
            Annotation::DetailedSolution => {
                let solutions = extract_solutions(text);
                self.state.solutions.extend(solutions.iter().cloned());
                self.state.refinements = 0;
                self.state.phase = Phase::Validation;
                Ok(self.emit(Action::PresentSolutions { solutions }))
            }
            _ => {
                let solutions = if annotation == Annotation::RoughSolution {
                    extract_solutions(text)
                } else {
                    Vec::new()
                };
                let version_issue = solutions.iter().any(|s| s.version_issue);
                self.state.solutions.extend(solutions);
                self.state.phase = Phase::SolutionGeneration;
                if self.state.refinements >= self.state.limits.max_refinements {
                    if let Some(solution) = self.state.solutions.last().cloned() {
                        // Accepted as is; every accepted solution goes through validation.
                        self.state.refinements = 0;
                        self.state.phase = Phase::Validation;
                        return Ok(self.emit(Action::AwaitValidation { solution }));
                    }
                }
                self.state.refinements += 1;
                self.follow_up(Turn::RoughSolution { version_issue }, Annotation::Prompt)
            }
        }
    }

    fn on_answer(&mut self, text: &str) -> Result<Action, EngineError> {
        if self.state.code_stage == Some(CodeStage::ConfirmingLocation) {
            let count = self
                .state
                .description
                .buggy_code
                .as_ref()
                .map_or(0, |c| c.line_count()) as u32;
            let named: Vec<u32> = NUMBER
                .captures_iter(text)
                .filter_map(|c| c[1].parse().ok())
                .filter(|&n| n >= 1 && n <= count)
                .collect();
            self.state.code_stage = Some(CodeStage::Repairing);
            if !named.is_empty() {
                self.state.proposed_loc = named;
            } else if !(text.trim().is_empty() || AFFIRMATIVE.is_match(text)) || self.state.proposed_loc.is_empty() {
                // Free-text location: pass it through as the LOC slot.
                self.state.proposed_loc.clear();
                self.state
                    .strategy
                    .slot_overrides
                    .insert(SLOT_LOC.to_string(), text.trim().to_string());
            }
            return self.follow_up(Turn::AfterLocalization, Annotation::Prompt);
        }

        if self.state.phase == Phase::ContextCompletion
            && self.state.questions_asked >= self.state.limits.max_questions
        {
            self.state.phase = Phase::SolutionGeneration;
        }
        let prompt = OutboundPrompt {
            templates: Vec::new(),
            text: text.to_string(),
        };
        Ok(self.send(prompt, Annotation::Prompt))
    }

    fn on_validation(&mut self, fixed: bool) -> Result<Action, EngineError> {
        if fixed {
            self.push(Role::User, "The solution fixed the crash.", Annotation::ValidationReport);
            return Ok(self.finish(Outcome::Resolved));
        }
        self.state.validation_attempts += 1;
        if self.state.validation_attempts >= self.state.max_retries || self.state.strategy.single_round {
            self.push(
                Role::User,
                "The solution did not fix the crash.",
                Annotation::ValidationReport,
            );
            return Ok(self.finish(Outcome::Unresolved));
        }
        self.state.refinements = 0;
        self.state.phase = Phase::SolutionGeneration;
        self.follow_up(Turn::ValidationFailed, Annotation::ValidationReport)
    }
}
