//! The coordinator: telemetry in, sessions and lessons out.
//!
//! [`Coordinator`] is an event-driven state machine. Telemetry ticks and
//! operator actions are fed to it in order by whoever owns it (the scripted
//! loop in [`run_pipeline`], or the service's coordinator task). It never
//! blocks on the operator, so detection keeps running during a dialogue;
//! anomalies raised meanwhile are queued and opened one at a time.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use aura_agents::agent_a::precedent_briefs;
use aura_agents::{characterize, ground_knowledge, ChatBackend, ChatMessage, Dialogue, Hypothesis, ProblemCharacterisation};
use aura_detect::{AnomalySignature, DetectError, NormativeModel, DEFAULT_DEBOUNCE, DEFAULT_WINDOW};
use aura_knowledge::CorpusIndex;
use aura_memory::{MemoryError, MemoryStore, DEFAULT_K, DEFAULT_MIN_SIMILARITY};
use aura_twin::{run_scenario, Scenario, SimError, TelemetryRecord, RESIDUAL_CHANNELS};

use crate::distill::distill_session;
use crate::operator::{OperatorAction, OperatorChannel, SessionView};
use crate::session::{terminate_check, FinalDiagnosis, SessionError, SessionLog};
use crate::telemetry::Monitor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Monitoring,
    Characterising,
    Diagnosing,
    AwaitingOperator,
    Concluded,
    Distilled,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Monitoring,
        Phase::Characterising,
        Phase::Diagnosing,
        Phase::AwaitingOperator,
        Phase::Concluded,
        Phase::Distilled,
    ];

    pub fn can_go_to(self, to: Phase) -> bool {
        use Phase::*;
        matches!(
            (self, to),
            (Monitoring, Characterising)
                | (Characterising, Diagnosing)
                | (Diagnosing, AwaitingOperator)
                | (AwaitingOperator, Diagnosing)
                | (Diagnosing, Concluded)
                | (AwaitingOperator, Concluded)
                | (Concluded, Distilled)
                | (Distilled, Monitoring)
        )
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("illegal phase transition {from:?} -> {to:?}")]
pub struct PhaseError {
    pub from: Phase,
    pub to: Phase,
}

/// Current phase plus the history of every phase entered.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMachine {
    phase: Phase,
    trace: Vec<Phase>,
}

impl Default for PhaseMachine {
    fn default() -> Self {
        Self {
            phase: Phase::Monitoring,
            trace: vec![Phase::Monitoring],
        }
    }
}

impl PhaseMachine {
    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn trace(&self) -> &[Phase] {
        &self.trace
    }

    pub fn go(&mut self, to: Phase) -> Result<(), PhaseError> {
        if !self.phase.can_go_to(to) {
            return Err(PhaseError { from: self.phase, to });
        }
        self.phase = to;
        self.trace.push(to);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub debounce: usize,
    pub window: usize,
    pub k: usize,
    pub min_similarity: f64,
    pub docs: usize,
    /// Sessions reaching this many turns are closed without a diagnosis.
    pub max_turns: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            debounce: DEFAULT_DEBOUNCE,
            window: DEFAULT_WINDOW,
            k: DEFAULT_K,
            min_similarity: DEFAULT_MIN_SIMILARITY,
            docs: aura_agents::agent_b::DEFAULT_DOCS,
            max_turns: 12,
        }
    }
}

/// Everything a coordinator needs; cheap to clone.
#[derive(Clone)]
pub struct Pipeline {
    pub model: Arc<NormativeModel>,
    pub memory: Arc<MemoryStore>,
    pub corpus: Option<Arc<CorpusIndex>>,
    pub backend: Arc<dyn ChatBackend>,
    pub config: PipelineConfig,
    /// Session logs are written here, if set.
    pub sessions_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error("no open session")]
    NoSession,
    #[error("confidence {0} outside [0, 1]")]
    InvalidConfidence(f64),
    #[error("css {0} outside 1..=5")]
    InvalidCss(u8),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Phase(_) => "phase",
            PipelineError::NoSession => "no_session",
            PipelineError::InvalidConfidence(_) => "confidence",
            PipelineError::InvalidCss(_) => "css",
            PipelineError::Detect(_) => "detect",
            PipelineError::Memory(_) => "memory",
            PipelineError::Session(_) => "session",
            PipelineError::Sim(_) => "sim",
        }
    }
}

/// Something the outside world may want to hear about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Phase { phase: Phase },
    Anomaly { session_id: String, trigger_t: f64, md2: f64, threshold: f64 },
    Queued { trigger_t: f64, pending: usize },
    Characterisation { characterisation: ProblemCharacterisation },
    Message { message: ChatMessage },
    Hypotheses { hypotheses: Vec<Hypothesis> },
    Concluded { session_id: String, validated: bool, cause: Option<String> },
    Lesson { session_id: String, lesson_id: Option<String>, rejected: Option<String> },
}

/// A session that has been distilled (or rejected) and left the coordinator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub log: SessionLog,
    pub log_path: Option<PathBuf>,
    pub lesson_id: Option<String>,
    pub rejected: Option<String>,
}

struct OpenSession {
    id: String,
    signature: AnomalySignature,
    characterisation: ProblemCharacterisation,
    dialogue: Dialogue,
    initial: Vec<Hypothesis>,
    confidence: f64,
    validated: bool,
    css: Option<u8>,
}

impl OpenSession {
    fn view(&self) -> SessionView {
        SessionView {
            session_id: self.id.clone(),
            characterisation: self.characterisation.clone(),
            initial_hypotheses: self.initial.clone(),
            hypotheses: self.dialogue.hypotheses().to_vec(),
            last_reply: self.dialogue.transcript().last().map(|m| m.content.clone()),
            turn_count: self.dialogue.turn_count(),
            agreed_cause: self.dialogue.agreed_cause().map(str::to_owned),
        }
    }

    fn log(&self, scenario_id: &str) -> SessionLog {
        let final_diagnosis = self.dialogue.agreed_cause().map(|cause| FinalDiagnosis {
            cause: cause.to_owned(),
            rationale: self
                .dialogue
                .hypotheses()
                .iter()
                .find(|h| h.cause == cause)
                .map(|h| h.rationale.clone())
                .unwrap_or_default(),
        });
        SessionLog {
            session_id: self.id.clone(),
            scenario_id: scenario_id.to_owned(),
            signature: self.signature.clone(),
            characterisation: self.characterisation.clone(),
            transcript: self.dialogue.transcript().to_vec(),
            hypotheses: self.dialogue.hypotheses().to_vec(),
            final_diagnosis,
            operator_confidence: self.confidence,
            operator_validated: self.validated,
            turn_count: self.dialogue.turn_count(),
            css: self.css,
            degraded: self.characterisation.degraded || self.dialogue.degraded(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelResidual {
    pub channel: String,
    /// Real minus twin.
    pub residual: f64,
}

/// Latest tick, for snapshots and the telemetry stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tick {
    pub t: f64,
    pub md2: Option<f64>,
    pub threshold: f64,
    pub residuals: Vec<ChannelResidual>,
}

impl Tick {
    fn of(r: &TelemetryRecord, md2: Option<f64>, threshold: f64) -> Self {
        Self {
            t: r.t,
            md2,
            threshold,
            residuals: RESIDUAL_CHANNELS
                .iter()
                .zip(r.residual())
                .map(|(c, v)| ChannelResidual {
                    channel: c.name.to_owned(),
                    residual: v,
                })
                .collect(),
        }
    }
}

/// Immutable view of the coordinator for readers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub phase: Phase,
    pub scenario_id: String,
    pub live_md2: Option<f64>,
    pub threshold: f64,
    pub t: Option<f64>,
    pub last_residuals: Vec<ChannelResidual>,
    pub session: Option<SessionView>,
    pub queued: usize,
    pub sessions_completed: usize,
    pub lessons: usize,
}

pub struct Coordinator {
    pipeline: Pipeline,
    scenario_id: String,
    monitor: Monitor,
    phases: PhaseMachine,
    session: Option<OpenSession>,
    queue: VecDeque<AnomalySignature>,
    completed: Vec<SessionOutcome>,
    last: Option<Tick>,
}

pub fn session_id(scenario_id: &str, trigger_t: f64) -> String {
    format!("{scenario_id}-{}", (trigger_t * 1000.0).round() as i64)
}

impl Coordinator {
    pub fn new(pipeline: Pipeline, scenario_id: impl Into<String>) -> Result<Self, PipelineError> {
        let monitor = Monitor::new(pipeline.model.clone(), pipeline.config.debounce, pipeline.config.window)?;
        Ok(Self {
            pipeline,
            scenario_id: scenario_id.into(),
            monitor,
            phases: PhaseMachine::default(),
            session: None,
            queue: VecDeque::new(),
            completed: Vec::new(),
            last: None,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phases.phase()
    }

    pub fn phase_trace(&self) -> &[Phase] {
        self.phases.trace()
    }

    pub fn completed(&self) -> &[SessionOutcome] {
        &self.completed
    }

    pub fn into_completed(self) -> Vec<SessionOutcome> {
        self.completed
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn view(&self) -> Option<SessionView> {
        self.session.as_ref().map(OpenSession::view)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            phase: self.phase(),
            scenario_id: self.scenario_id.clone(),
            live_md2: self.last.as_ref().and_then(|t| t.md2),
            threshold: self.pipeline.model.threshold(),
            t: self.last.as_ref().map(|t| t.t),
            last_residuals: self.last.as_ref().map(|t| t.residuals.clone()).unwrap_or_default(),
            session: self.view(),
            queued: self.queue.len(),
            sessions_completed: self.completed.len(),
            lessons: self.pipeline.memory.len(),
        }
    }

    pub fn last_tick(&self) -> Option<&Tick> {
        self.last.as_ref()
    }

    fn go(&mut self, to: Phase, events: &mut Vec<Event>) -> Result<(), PipelineError> {
        self.phases.go(to)?;
        events.push(Event::Phase { phase: to });
        Ok(())
    }

    /// Feeds one telemetry tick.
    pub fn ingest(&mut self, r: &TelemetryRecord) -> Result<Vec<Event>, PipelineError> {
        let mut events = Vec::new();
        let sig = self.monitor.ingest(r)?;
        self.last = Some(Tick::of(r, self.monitor.last_md2(), self.pipeline.model.threshold()));
        if let Some(sig) = sig {
            if self.phase() == Phase::Monitoring {
                self.open(sig, &mut events)?;
            } else {
                self.queue.push_back(sig);
                events.push(Event::Queued {
                    trigger_t: r.t,
                    pending: self.queue.len(),
                });
            }
        }
        Ok(events)
    }

    fn open(&mut self, sig: AnomalySignature, events: &mut Vec<Event>) -> Result<(), PipelineError> {
        let id = session_id(&self.scenario_id, sig.event.trigger_t);
        events.push(Event::Anomaly {
            session_id: id.clone(),
            trigger_t: sig.event.trigger_t,
            md2: sig.event.md2_at_trigger,
            threshold: sig.event.threshold,
        });
        self.go(Phase::Characterising, events)?;
        let cfg = self.pipeline.config;
        let hits = self.pipeline.memory.query(&sig.to_text(), cfg.k, cfg.min_similarity)?;
        let ch = characterize(self.pipeline.backend.as_ref(), &sig, &hits);
        events.push(Event::Characterisation {
            characterisation: ch.clone(),
        });

        self.go(Phase::Diagnosing, events)?;
        let corpus = self.pipeline.corpus.as_deref();
        let grounding = ground_knowledge(corpus, &ch, cfg.docs);
        let dialogue = Dialogue::open(
            self.pipeline.backend.clone(),
            &ch,
            &precedent_briefs(&hits),
            &grounding,
            corpus,
            sig.event.trigger_t,
        );
        if let Some(m) = dialogue.transcript().last() {
            events.push(Event::Message { message: m.clone() });
        }
        events.push(Event::Hypotheses {
            hypotheses: dialogue.hypotheses().to_vec(),
        });
        self.session = Some(OpenSession {
            id,
            signature: sig,
            characterisation: ch,
            initial: dialogue.hypotheses().to_vec(),
            dialogue,
            confidence: 0.0,
            validated: false,
            css: None,
        });
        self.go(Phase::AwaitingOperator, events)
    }

    fn require(&self, phase: Phase) -> Result<(), PipelineError> {
        if self.session.is_none() {
            return Err(PipelineError::NoSession);
        }
        if self.phase() != phase {
            return Err(PhaseError {
                from: self.phase(),
                to: Phase::Diagnosing,
            }
            .into());
        }
        Ok(())
    }

    /// Applies one operator action to the open session.
    pub fn act(&mut self, action: &OperatorAction) -> Result<Vec<Event>, PipelineError> {
        self.require(Phase::AwaitingOperator)?;
        let mut events = Vec::new();
        match action {
            OperatorAction::Abandon => {
                self.conclude(&mut events)?;
                return Ok(events);
            }
            OperatorAction::Confirm { confidence, .. } if !(0.0..=1.0).contains(confidence) => {
                return Err(PipelineError::InvalidConfidence(*confidence));
            }
            _ => {}
        }
        self.go(Phase::Diagnosing, &mut events)?;
        let (text, confirmed) = match action {
            OperatorAction::Say { text } => (text.clone(), None),
            OperatorAction::Confirm { cause, confidence } => {
                (format!("confirm: {cause} (confidence {confidence:.2})"), Some((cause, *confidence)))
            }
            OperatorAction::Abandon => unreachable!(),
        };
        let s = self.session.as_mut().ok_or(PipelineError::NoSession)?;
        let before = s.dialogue.transcript().len();
        let outcome = s.dialogue.step(&text).map_err(|_| PipelineError::NoSession)?;
        for m in &s.dialogue.transcript()[before..] {
            events.push(Event::Message { message: m.clone() });
        }
        events.push(Event::Hypotheses {
            hypotheses: outcome.hypotheses.clone(),
        });
        let mut done = false;
        if let Some((cause, confidence)) = confirmed {
            let agreed = outcome.agreed_cause.as_deref().is_some_and(|c| c.eq_ignore_ascii_case(cause));
            s.confidence = confidence;
            if terminate_check(confidence, agreed) {
                s.validated = true;
                done = true;
            }
        }
        if s.dialogue.turn_count() >= self.pipeline.config.max_turns {
            done = true;
        }
        if done {
            self.conclude(&mut events)?;
        } else {
            self.go(Phase::AwaitingOperator, &mut events)?;
        }
        Ok(events)
    }

    fn conclude(&mut self, events: &mut Vec<Event>) -> Result<(), PipelineError> {
        self.go(Phase::Concluded, events)?;
        let s = self.session.as_mut().ok_or(PipelineError::NoSession)?;
        s.dialogue.close();
        events.push(Event::Concluded {
            session_id: s.id.clone(),
            validated: s.validated,
            cause: s.dialogue.agreed_cause().map(str::to_owned),
        });
        Ok(())
    }

    /// Records the operator's CSS label; allowed while the session is open
    /// or concluded.
    pub fn rate(&mut self, css: u8) -> Result<(), PipelineError> {
        if !(1..=5).contains(&css) {
            return Err(PipelineError::InvalidCss(css));
        }
        if !matches!(self.phase(), Phase::AwaitingOperator | Phase::Concluded) {
            return Err(PhaseError {
                from: self.phase(),
                to: Phase::Concluded,
            }
            .into());
        }
        self.session.as_mut().ok_or(PipelineError::NoSession)?.css = Some(css);
        Ok(())
    }

    /// Closes a concluded session: persist the log, then distill. Returns to
    /// monitoring and opens the next queued anomaly, if any.
    pub fn finish(&mut self) -> Result<Vec<Event>, PipelineError> {
        self.require(Phase::Concluded)?;
        let mut events = Vec::new();
        let s = self.session.take().ok_or(PipelineError::NoSession)?;
        let log = s.log(&self.scenario_id);
        log.validate()?;
        let log_path = match &self.pipeline.sessions_dir {
            Some(dir) => Some(log.persist(dir)?),
            None => None,
        };
        let (lesson_id, rejected) = match distill_session(&log, self.pipeline.corpus.as_deref()) {
            Ok(lesson) => match self.pipeline.memory.insert(lesson) {
                Ok(id) => (Some(id), None),
                Err(e) => (None, Some(e.to_string())),
            },
            Err(e) => (None, Some(e.to_string())),
        };
        self.go(Phase::Distilled, &mut events)?;
        events.push(Event::Lesson {
            session_id: log.session_id.clone(),
            lesson_id: lesson_id.clone(),
            rejected: rejected.clone(),
        });
        self.completed.push(SessionOutcome {
            log,
            log_path,
            lesson_id,
            rejected,
        });
        self.go(Phase::Monitoring, &mut events)?;
        if let Some(next) = self.queue.pop_front() {
            self.open(next, &mut events)?;
        }
        Ok(events)
    }
}

/// Result of a scripted end-to-end run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRun {
    pub scenario_id: String,
    pub ticks: usize,
    pub sessions: Vec<SessionOutcome>,
    pub phase_trace: Vec<Phase>,
}

impl PipelineRun {
    pub fn first(&self) -> Option<&SessionOutcome> {
        self.sessions.first()
    }
}

/// Drives an open session to completion with `operator`.
pub fn drive_session(coord: &mut Coordinator, operator: &mut dyn OperatorChannel) -> Result<(), PipelineError> {
    while coord.phase() == Phase::AwaitingOperator {
        let view = coord.view().ok_or(PipelineError::NoSession)?;
        let action = operator.next_action(&view);
        coord.act(&action)?;
    }
    if coord.phase() == Phase::Concluded {
        let view = coord.view().ok_or(PipelineError::NoSession)?;
        if let Some(css) = operator.rate_css(&view) {
            coord.rate(css)?;
        }
        coord.finish()?;
    }
    Ok(())
}

/// Simulates `scenario`, monitors it, and runs every session it triggers
/// to completion with `operator`.
pub fn run_pipeline(
    pipeline: &Pipeline,
    scenario: &Scenario,
    operator: &mut dyn OperatorChannel,
) -> Result<PipelineRun, PipelineError> {
    let records = run_scenario(scenario)?;
    let mut coord = Coordinator::new(pipeline.clone(), scenario.id.clone())?;
    for r in &records {
        coord.ingest(r)?;
        // A finished session may immediately open a queued one.
        while coord.phase() != Phase::Monitoring {
            drive_session(&mut coord, operator)?;
        }
    }
    Ok(PipelineRun {
        scenario_id: scenario.id.clone(),
        ticks: records.len(),
        phase_trace: coord.phase_trace().to_vec(),
        sessions: coord.into_completed(),
    })
}
