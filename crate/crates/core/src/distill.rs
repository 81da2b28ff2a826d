//! Turning validated sessions into lessons.

use std::fmt::Write as _;

use aura_agents::agent_b::first_check;
use aura_knowledge::CorpusIndex;
use aura_memory::{DistilledLesson, MemoryError, MemoryStore, Origin, CONFIDENCE_GATE};

use crate::session::SessionLog;

#[derive(Debug, thiserror::Error)]
pub enum DistillError {
    #[error("session {0} was not validated by the operator")]
    NotValidated(String),
    #[error("session {id}: operator confidence {confidence} is not above {CONFIDENCE_GATE}")]
    LowConfidence { id: String, confidence: f64 },
    #[error("session {0} has no final diagnosis")]
    NoDiagnosis(String),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

pub fn lesson_id(session_id: &str) -> String {
    format!("lesson-{session_id}")
}

/// The stored characterisation: symptoms, confirmed cause, and how to
/// verify it next time.
pub fn lesson_text(log: &SessionLog, cause: &str, verification: &str) -> String {
    let mut out = String::from("Symptoms:");
    for (i, c) in log.signature.top_summaries().enumerate() {
        let sep = if i == 0 { " " } else { "; " };
        let _ = write!(out, "{sep}{} off the twin by {} {}", c.channel, c.fmt_signed(c.deviation), c.unit);
    }
    let _ = write!(out, ". Confirmed cause: {cause}. Verification: {verification}");
    out
}

fn distill(log: &SessionLog, corpus: Option<&CorpusIndex>, origin: Origin) -> Result<DistilledLesson, DistillError> {
    if !log.operator_validated {
        return Err(DistillError::NotValidated(log.session_id.clone()));
    }
    if !(log.operator_confidence > CONFIDENCE_GATE) {
        return Err(DistillError::LowConfidence {
            id: log.session_id.clone(),
            confidence: log.operator_confidence,
        });
    }
    let diag = log
        .final_diagnosis
        .as_ref()
        .ok_or_else(|| DistillError::NoDiagnosis(log.session_id.clone()))?;
    let verification = corpus
        .and_then(|c| c.docs().iter().find(|d| d.cause.as_deref() == Some(diag.cause.as_str())).cloned())
        .and_then(|d| first_check(&d.body))
        .unwrap_or_else(|| diag.rationale.clone());
    Ok(DistilledLesson {
        id: lesson_id(&log.session_id),
        created_t: log.signature.event.trigger_t,
        anomaly_text: log.signature.to_text(),
        validated_characterisation: lesson_text(log, &diag.cause, &verification),
        root_cause: diag.cause.clone(),
        source_session: log.session_id.clone(),
        origin,
        validated: true,
        operator_confidence: log.operator_confidence,
        embedding: Vec::new(),
    })
}

/// Lesson for a concluded live session. Rejects sessions that were not
/// validated with confidence above 0.9.
pub fn distill_session(log: &SessionLog, corpus: Option<&CorpusIndex>) -> Result<DistilledLesson, DistillError> {
    distill(log, corpus, Origin::Live)
}

/// Pre-mission injection of a historical or rehearsed session: same gate,
/// marked as such, stored immediately.
pub fn inject_premission(
    log: &SessionLog,
    store: &MemoryStore,
    corpus: Option<&CorpusIndex>,
) -> Result<DistilledLesson, DistillError> {
    let lesson = distill(log, corpus, Origin::Premission)?;
    store.insert(lesson.clone())?;
    Ok(store.get(&lesson.id).unwrap_or(lesson))
}
