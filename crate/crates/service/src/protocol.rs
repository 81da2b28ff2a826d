//! Wire frames. Every frame is a JSON object with a `type` field.

use serde::{Deserialize, Serialize};

use aura_core::orchestrator::{ChannelResidual, Phase, Tick};
use aura_core::SessionView;
use aura_memory::{DistilledLesson, Origin};

/// Sent by the console on `/dialog`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientFrame {
    Say { text: String },
    Confirm { cause: String, confidence: f64 },
    Abandon,
    Css { value: u8 },
    /// Close a concluded session: persist, distill, resume monitoring.
    Finish,
}

/// Sent on `/dialog` in addition to coordinator events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    /// First frame on connect.
    Hello { phase: Phase, session: Option<SessionView> },
    Error { code: String, message: String },
}

/// One `/telemetry` frame per simulated tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub t: f64,
    pub md2: Option<f64>,
    pub threshold: f64,
    pub phase: Phase,
    pub residuals: Vec<ChannelResidual>,
}

impl TelemetryFrame {
    pub fn new(tick: &Tick, phase: Phase) -> Self {
        Self {
            t: tick.t,
            md2: tick.md2,
            threshold: tick.threshold,
            phase,
            residuals: tick.residuals.clone(),
        }
    }
}

/// `/lessons` entry: a lesson without its embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LessonView {
    pub id: String,
    pub created_t: f64,
    pub root_cause: String,
    pub validated_characterisation: String,
    pub anomaly_text: String,
    pub source_session: String,
    pub origin: Origin,
    pub operator_confidence: f64,
}

impl From<DistilledLesson> for LessonView {
    fn from(l: DistilledLesson) -> Self {
        Self {
            id: l.id,
            created_t: l.created_t,
            root_cause: l.root_cause,
            validated_characterisation: l.validated_characterisation,
            anomaly_text: l.anomaly_text,
            source_session: l.source_session,
            origin: l.origin,
            operator_confidence: l.operator_confidence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}
