//! Two-phase evaluation: prime a memory with five validated sessions, then
//! compare first encounters (empty memory) against post-distillation runs
//! (primed memory) on novel scenarios.
//!
//! CSS values here come from the scripted rubric in [`crate::operator`],
//! not from a human rater.

use std::fmt::Write as _;
use std::io;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use aura_agents::{ChatBackend, Mode};
use aura_detect::NormativeModel;
use aura_knowledge::CorpusIndex;
use aura_memory::{MemoryError, MemoryStore};

use crate::operator::ScriptedOperator;
use crate::orchestrator::{run_pipeline, Pipeline, PipelineConfig, PipelineError, SessionOutcome};
use crate::scenarios::{for_use_case, UseCase};

/// Turn reduction reported for human operators and live models; printed
/// next to ours for orientation only.
pub const REFERENCE_TURN_REDUCTION: f64 = 71.0;

/// Priming set: two thruster disturbances, two rotational anomalies and
/// one vertical anomaly.
pub const PHASE1_SET: [(UseCase, usize, u64); 5] = [
    (UseCase::ThrusterDisturbance, 0, 101),
    (UseCase::ThrusterDisturbance, 1, 102),
    (UseCase::RotationalMotion, 0, 103),
    (UseCase::RotationalMotion, 1, 104),
    (UseCase::VerticalMotion, 0, 105),
];

/// Phase-2 scenarios use a magnitude variant absent from the priming set.
/// Every repetition replays the same scenario: with a scripted operator
/// and mock backend a repetition is a determinism check, not a new sample.
pub const NOVEL_VARIANT: usize = 2;
pub const NOVEL_SEED: u64 = 900;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    First,
    Post,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::First => "first",
            Condition::Post => "post",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "first" => Some(Condition::First),
            "post" => Some(Condition::Post),
            _ => None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Shared ingredients; each run gets its own memory.
#[derive(Clone)]
pub struct EvalSetup {
    pub model: Arc<NormativeModel>,
    pub corpus: Option<Arc<CorpusIndex>>,
    pub backend: Arc<dyn ChatBackend>,
    pub config: PipelineConfig,
}

impl EvalSetup {
    fn pipeline(&self, memory: Arc<MemoryStore>) -> Pipeline {
        Pipeline {
            model: self.model.clone(),
            memory,
            corpus: self.corpus.clone(),
            backend: self.backend.clone(),
            config: self.config,
            sessions_dir: None,
        }
    }
}

/// Runs one scenario with the scripted operator; exactly one session is
/// expected.
fn scripted_session(
    setup: &EvalSetup,
    memory: Arc<MemoryStore>,
    uc: UseCase,
    variant: usize,
    seed: u64,
) -> Result<SessionOutcome, EvalError> {
    let scenario = for_use_case(uc, seed, variant);
    let mut operator = ScriptedOperator::for_use_case(uc);
    let run = run_pipeline(&setup.pipeline(memory), &scenario, &mut operator)?;
    let n = run.sessions.len();
    run.sessions
        .into_iter()
        .next()
        .filter(|_| n == 1)
        .ok_or_else(|| EvalError::Protocol(format!("{} produced {n} sessions, expected 1", scenario.id)))
}

#[derive(Debug, Clone)]
pub struct Phase1 {
    pub memory: Arc<MemoryStore>,
    pub sessions: Vec<SessionOutcome>,
}

/// Primes `memory` (which must be empty) with the five priming sessions, in
/// order. Every session must end validated and stored.
pub fn run_phase1(setup: &EvalSetup, memory: Arc<MemoryStore>) -> Result<Phase1, EvalError> {
    if !memory.is_empty() {
        return Err(EvalError::Protocol(format!("priming needs an empty memory, found {} lessons", memory.len())));
    }
    let mut sessions = Vec::new();
    for (uc, variant, seed) in PHASE1_SET {
        let s = scripted_session(setup, memory.clone(), uc, variant, seed)?;
        if s.lesson_id.is_none() {
            return Err(EvalError::Protocol(format!(
                "priming session {} was not stored: {}",
                s.log.session_id,
                s.rejected.as_deref().unwrap_or("unknown reason")
            )));
        }
        sessions.push(s);
    }
    if memory.len() != PHASE1_SET.len() {
        return Err(EvalError::Protocol(format!("memory holds {} lessons after priming", memory.len())));
    }
    Ok(Phase1 { memory, sessions })
}

/// Independent copy of a store's lessons.
pub fn copy_store(src: &MemoryStore) -> Result<MemoryStore, MemoryError> {
    let copy = MemoryStore::new(src.embedder().clone());
    for l in src.lessons() {
        copy.insert(l)?;
    }
    Ok(copy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub use_case: UseCase,
    pub condition: Condition,
    pub rep: usize,
    pub scenario_id: String,
    pub session_id: String,
    pub mode: Mode,
    pub css: Option<u8>,
    pub turns: usize,
    pub validated: bool,
    pub root_cause: Option<String>,
}

/// Runs `n` novel scenarios per evaluated use case under `condition`.
/// `primed` is required for [`Condition::Post`]; each run works on its own
/// copy. Rows are ordered by use case, then repetition.
pub fn run_phase2(
    setup: &EvalSetup,
    condition: Condition,
    primed: Option<&MemoryStore>,
    n: usize,
) -> Result<Vec<RunRow>, EvalError> {
    if n == 0 {
        return Err(EvalError::Protocol("need at least one repetition".into()));
    }
    if condition == Condition::Post && primed.map_or(true, MemoryStore::is_empty) {
        return Err(EvalError::Protocol("post-distillation runs need a primed memory".into()));
    }
    let jobs: Vec<(UseCase, usize)> = UseCase::EVALUATED
        .iter()
        .flat_map(|&uc| (0..n).map(move |rep| (uc, rep)))
        .collect();
    let rows: Result<Vec<RunRow>, EvalError> = jobs
        .par_iter()
        .map(|&(uc, rep)| {
            let memory = match (condition, primed) {
                (Condition::Post, Some(p)) => copy_store(p)?,
                _ => MemoryStore::new(setup_embedder(primed)),
            };
            let s = scripted_session(setup, Arc::new(memory), uc, NOVEL_VARIANT, NOVEL_SEED)?;
            Ok(RunRow {
                use_case: uc,
                condition,
                rep,
                scenario_id: s.log.scenario_id.clone(),
                session_id: s.log.session_id.clone(),
                mode: s.log.characterisation.mode,
                css: s.log.css,
                turns: s.log.turn_count,
                validated: s.log.operator_validated,
                root_cause: s.log.final_diagnosis.as_ref().map(|d| d.cause.clone()),
            })
        })
        .collect();
    rows
}

fn setup_embedder(primed: Option<&MemoryStore>) -> Arc<dyn aura_memory::Embedder> {
    match primed {
        Some(p) => p.embedder().clone(),
        None => Arc::new(aura_memory::MockEmbedder::new()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub mean_css: Option<f64>,
    pub mean_turns: f64,
}

fn cell(rows: &[&RunRow]) -> Option<Cell> {
    if rows.is_empty() {
        return None;
    }
    let css: Vec<f64> = rows.iter().filter_map(|r| r.css.map(f64::from)).collect();
    Some(Cell {
        n: rows.len(),
        mean_css: (!css.is_empty()).then(|| css.iter().sum::<f64>() / css.len() as f64),
        mean_turns: rows.iter().map(|r| r.turns as f64).sum::<f64>() / rows.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportLine {
    pub use_case: Option<UseCase>,
    pub first: Option<Cell>,
    pub post: Option<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub lines: Vec<ReportLine>,
    pub overall: ReportLine,
    /// Percent drop in mean turns from first encounter to post-distillation.
    pub turn_reduction: Option<f64>,
}

/// Per-use-case means (per-session averages), overall means, and the turn
/// reduction when both conditions are present.
pub fn summarize(rows: &[RunRow]) -> Report {
    let pick = |uc: Option<UseCase>, c: Condition| {
        let sel: Vec<&RunRow> = rows
            .iter()
            .filter(|r| r.condition == c && uc.map_or(true, |u| r.use_case == u))
            .collect();
        cell(&sel)
    };
    let lines = UseCase::EVALUATED
        .iter()
        .filter(|&&uc| rows.iter().any(|r| r.use_case == uc))
        .map(|&uc| ReportLine {
            use_case: Some(uc),
            first: pick(Some(uc), Condition::First),
            post: pick(Some(uc), Condition::Post),
        })
        .collect();
    let overall = ReportLine {
        use_case: None,
        first: pick(None, Condition::First),
        post: pick(None, Condition::Post),
    };
    let turn_reduction = match (overall.first, overall.post) {
        (Some(f), Some(p)) if f.mean_turns > 0.0 => Some(100.0 * (f.mean_turns - p.mean_turns) / f.mean_turns),
        _ => None,
    };
    Report {
        lines,
        overall,
        turn_reduction,
    }
}

fn fmt_cell(c: Option<Cell>) -> String {
    match c {
        None => "-".into(),
        Some(c) => {
            let css = c.mean_css.map_or("-".into(), |v| format!("{v:.1}"));
            format!("{css} / {:.1}", c.mean_turns)
        }
    }
}

impl Report {
    /// Plain-text table: one row per use case, then the overall average.
    pub fn to_table(&self) -> String {
        let n = self
            .overall
            .first
            .or(self.overall.post)
            .map_or(0, |c| c.n / self.lines.len().max(1));
        let mut out = String::new();
        let _ = writeln!(out, "{:<28} | {:<20} | {:<20}", format!("Use case (mean of n={n})"), "First encounter", "Post-distillation");
        let _ = writeln!(out, "{:<28} | {:<20} | {:<20}", "", "scripted CSS / turns", "scripted CSS / turns");
        let _ = writeln!(out, "{}", "-".repeat(74));
        for l in &self.lines {
            let name = l.use_case.map_or("", UseCase::label);
            let _ = writeln!(out, "{:<28} | {:<20} | {:<20}", name, fmt_cell(l.first), fmt_cell(l.post));
        }
        let _ = writeln!(out, "{}", "-".repeat(74));
        let _ = writeln!(
            out,
            "{:<28} | {:<20} | {:<20}",
            "Overall average",
            fmt_cell(self.overall.first),
            fmt_cell(self.overall.post)
        );
        if let Some(r) = self.turn_reduction {
            let _ = writeln!(out, "\nTurn reduction: {r:.0}% (reference value: {REFERENCE_TURN_REDUCTION:.0}%)");
        }
        out
    }
}

pub fn write_csv<W: io::Write>(rows: &[RunRow], w: W) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "use_case",
        "condition",
        "rep",
        "scenario_id",
        "session_id",
        "mode",
        "css",
        "turns",
        "validated",
        "root_cause",
    ])?;
    for r in rows {
        wtr.write_record([
            r.use_case.label().to_owned(),
            r.condition.label().to_owned(),
            r.rep.to_string(),
            r.scenario_id.clone(),
            r.session_id.clone(),
            match r.mode {
                Mode::Transcription => "transcription".into(),
                Mode::ContextInformed => "context_informed".into(),
            },
            r.css.map_or(String::new(), |c| c.to_string()),
            r.turns.to_string(),
            r.validated.to_string(),
            r.root_cause.clone().unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[RunRow], path: &Path) -> Result<(), EvalError> {
    write_csv(rows, std::fs::File::create(path)?)
}

/// Both phases end to end: prime, then both conditions with `n` repetitions.
pub fn run_full(setup: &EvalSetup, memory: Arc<MemoryStore>, n: usize) -> Result<(Phase1, Vec<RunRow>), EvalError> {
    let phase1 = run_phase1(setup, memory)?;
    let mut rows = run_phase2(setup, Condition::First, None, n)?;
    rows.extend(run_phase2(setup, Condition::Post, Some(&phase1.memory), n)?);
    Ok((phase1, rows))
}
