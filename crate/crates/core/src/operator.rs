//! The human side of a diagnostic session.
//!
//! The orchestrator talks to the operator only through [`OperatorChannel`].
//! Implementations: [`ScriptedOperator`] (evaluation), [`ConsoleOperator`]
//! (terminal), and the WebSocket bridge in the service.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use aura_agents::{Hypothesis, Mode, ProblemCharacterisation, UNDIAGNOSED};

use crate::scenarios::UseCase;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OperatorAction {
    /// Free text: an observation, or `rule out: <cause>`.
    Say { text: String },
    /// Agree on `cause` with the given confidence in [0, 1].
    Confirm { cause: String, confidence: f64 },
    /// Give up without a diagnosis.
    Abandon,
}

/// What the operator sees while a session is open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub characterisation: ProblemCharacterisation,
    /// Agent B's opening ranking.
    pub initial_hypotheses: Vec<Hypothesis>,
    pub hypotheses: Vec<Hypothesis>,
    pub last_reply: Option<String>,
    pub turn_count: usize,
    pub agreed_cause: Option<String>,
}

pub trait OperatorChannel: Send {
    fn next_action(&mut self, view: &SessionView) -> OperatorAction;

    /// CSS label for the characterisation, entered once the session is concluded.
    fn rate_css(&mut self, view: &SessionView) -> Option<u8>;
}

/// Scripted rubric used in place of a human rating:
///
/// 1. a context-informed characterisation pointing at the wrong cause;
/// 2. a transcription: symptoms with numbers, no cause;
/// 3. the right cause from a precedent;
/// 4. ... plus a concrete check to run;
/// 5. ... and the opening ranking is already confident enough that only
///    confirmation is needed.
pub fn scripted_css(ch: &ProblemCharacterisation, initial: &[Hypothesis], truth: &str, confirm_at: f64) -> u8 {
    match ch.mode {
        Mode::Transcription => 2,
        Mode::ContextInformed => {
            if ch.candidate_causes.first().map(String::as_str) != Some(truth) {
                return 1;
            }
            if !ch.summary_text.contains("Suggested check:") {
                return 3;
            }
            match initial.first() {
                Some(h) if h.cause == truth && h.confidence >= confirm_at => 5,
                _ => 4,
            }
        }
    }
}

/// Plays a knowledgeable operator who knows the true cause but only
/// reveals it through observations, one per turn.
#[derive(Debug, Clone)]
pub struct ScriptedOperator {
    truth: String,
    clues: Vec<String>,
    next_clue: usize,
    /// Confirm once the truth leads with at least this confidence.
    pub confirm_at: f64,
    /// Confidence stated on confirmation.
    pub confidence: f64,
}

pub const CONFIRM_AT: f64 = 0.85;
pub const STATED_CONFIDENCE: f64 = 0.95;

impl ScriptedOperator {
    pub fn new(truth: impl Into<String>, clues: Vec<String>) -> Self {
        Self {
            truth: truth.into(),
            clues,
            next_clue: 0,
            confirm_at: CONFIRM_AT,
            confidence: STATED_CONFIDENCE,
        }
    }

    pub fn for_use_case(uc: UseCase) -> Self {
        Self::new(uc.root_cause(), clues(uc).iter().map(|s| s.to_string()).collect())
    }

    pub fn truth(&self) -> &str {
        &self.truth
    }
}

impl OperatorChannel for ScriptedOperator {
    fn next_action(&mut self, view: &SessionView) -> OperatorAction {
        if let Some(top) = view.hypotheses.first() {
            if top.cause == self.truth && top.confidence >= self.confirm_at {
                return OperatorAction::Confirm {
                    cause: self.truth.clone(),
                    confidence: self.confidence,
                };
            }
            if top.cause != self.truth && top.cause != UNDIAGNOSED {
                return OperatorAction::Say {
                    text: format!("rule out: {}", top.cause),
                };
            }
        }
        match self.clues.get(self.next_clue) {
            Some(c) => {
                self.next_clue += 1;
                OperatorAction::Say { text: c.clone() }
            }
            None => OperatorAction::Abandon,
        }
    }

    fn rate_css(&mut self, view: &SessionView) -> Option<u8> {
        Some(scripted_css(
            &view.characterisation,
            &view.initial_hypotheses,
            &self.truth,
            self.confirm_at,
        ))
    }
}

/// What the pilot reports, in order, for each fault class.
pub fn clues(uc: UseCase) -> &'static [&'static str] {
    match uc {
        UseCase::ThrusterDisturbance => &[
            "Camera shows the vehicle crabbing to starboard.",
            "Lateral position keeps drifting even with thrusters on.",
            "The umbilical looks taut on the deck camera.",
            "Sway authority is saturated trying to hold station.",
            "There is a steady pull on the tether at the winch.",
            "Drag increases when we pay out more line.",
            "Looks like a snag on the mooring.",
        ],
        UseCase::RotationalMotion => &[
            "Forward speed looks normal.",
            "Rotation is much slower than commanded.",
            "The response feels sluggish on the joystick.",
            "Port motor current is high for the delivered torque.",
            "We passed through a patch of kelp and weed earlier.",
            "Camera shows debris near the propeller guard.",
            "The turn never reaches the commanded rate.",
        ],
        UseCase::VerticalMotion => &[
            "Descent is much slower than commanded.",
            "Vertical thrust is working hard the whole time.",
            "It seems to float back up when thrust eases.",
            "The trim looks nose-up on the camera.",
            "A ballast weight may have been left off.",
            "Buoyancy seems higher than on the last dive.",
        ],
        UseCase::CompassHeading => &[
            "The compass changed when we approached the pier.",
            "We are close to a steel hull.",
            "The camera view shows no actual turning.",
            "The offset is constant.",
            "Looks like magnetic interference from the wreck.",
            "The bias disappears away from the structure.",
        ],
    }
}

/// Terminal operator: prints agent replies and reads commands.
///
/// ```text
/// confirm <cause> <confidence>   agree on a cause
/// rule out: <cause>              sent as text
/// abandon                        end without a diagnosis
/// anything else                  an observation
/// ```
pub struct ConsoleOperator<R, W> {
    input: R,
    output: W,
    started: bool,
    last_shown: Option<String>,
}

impl<R: BufRead + Send, W: Write + Send> ConsoleOperator<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self {
            input,
            output,
            started: false,
            last_shown: None,
        }
    }

    fn read_line(&mut self, prompt: &str) -> Option<String> {
        let _ = write!(self.output, "{prompt}");
        let _ = self.output.flush();
        let mut line = String::new();
        match self.input.read_line(&mut line) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(line.trim().to_owned()),
        }
    }
}

/// Parses one console line.
pub fn parse_console_line(line: &str) -> OperatorAction {
    let trimmed = line.trim();
    if trimmed.eq_ignore_ascii_case("abandon") {
        return OperatorAction::Abandon;
    }
    if let Some(rest) = trimmed.strip_prefix("confirm ") {
        if let Some((cause, conf)) = rest.trim().rsplit_once(' ') {
            if let Ok(confidence) = conf.parse::<f64>() {
                return OperatorAction::Confirm {
                    cause: cause.trim().replace('_', " "),
                    confidence,
                };
            }
        }
    }
    OperatorAction::Say {
        text: trimmed.to_owned(),
    }
}

impl<R: BufRead + Send, W: Write + Send> OperatorChannel for ConsoleOperator<R, W> {
    fn next_action(&mut self, view: &SessionView) -> OperatorAction {
        if !self.started {
            let _ = writeln!(self.output, "\n[characterisation] {}", view.characterisation.summary_text);
            self.started = true;
        }
        if view.last_reply != self.last_shown {
            if let Some(r) = &view.last_reply {
                let _ = writeln!(self.output, "[agent] {r}");
            }
            for h in &view.hypotheses {
                let _ = writeln!(self.output, "  {:.2}  {}", h.confidence, h.cause);
            }
            self.last_shown = view.last_reply.clone();
        }
        match self.read_line("operator> ") {
            Some(line) => parse_console_line(&line),
            None => OperatorAction::Abandon,
        }
    }

    fn rate_css(&mut self, _view: &SessionView) -> Option<u8> {
        loop {
            let line = self.read_line("CSS 1-5 (blank to skip)> ")?;
            if line.is_empty() {
                return None;
            }
            match line.parse::<u8>() {
                Ok(v) if (1..=5).contains(&v) => return Some(v),
                _ => {
                    let _ = writeln!(self.output, "enter a number from 1 to 5");
                }
            }
        }
    }
}
