use serde::{Deserialize, Serialize};

/// A lesson is admitted only when validated and confidence exceeds this.
pub const CONFIDENCE_GATE: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    #[default]
    Live,
    Premission,
}

/// A validated (anomaly text → characterisation) pair plus its root cause.
/// Field order here is the on-disk field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistilledLesson {
    pub id: String,
    pub created_t: f64,
    pub anomaly_text: String,
    pub validated_characterisation: String,
    pub root_cause: String,
    pub source_session: String,
    #[serde(default)]
    pub origin: Origin,
    pub validated: bool,
    /// Operator confidence in the diagnosis the lesson records.
    pub operator_confidence: f64,
    /// Computed on insert when empty.
    #[serde(default)]
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub lesson: DistilledLesson,
    pub similarity: f64,
}

impl DistilledLesson {
    /// True when the lesson may enter the store.
    pub fn passes_gate(&self) -> bool {
        self.validated && self.operator_confidence > CONFIDENCE_GATE && self.operator_confidence <= 1.0
    }
}
