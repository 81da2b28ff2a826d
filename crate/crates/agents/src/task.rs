//! Structured payloads exchanged with the chat backend. Each request ends
//! with a fenced JSON task; each reply must carry one fenced JSON block
//! matching the corresponding reply type exactly.

use serde::{Deserialize, Serialize};

use aura_detect::{AnomalySignature, ChannelSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureBrief {
    pub trigger_t: f64,
    pub md2: f64,
    pub threshold: f64,
    pub consecutive: usize,
    /// Top channels only, in rank order.
    pub channels: Vec<ChannelSummary>,
}

impl SignatureBrief {
    pub fn of(sig: &AnomalySignature) -> Self {
        Self {
            trigger_t: sig.event.trigger_t,
            md2: sig.event.md2_at_trigger,
            threshold: sig.event.threshold,
            consecutive: sig.event.consecutive_count,
            channels: sig.top_summaries().cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecedentBrief {
    pub lesson_id: String,
    pub similarity: f64,
    pub root_cause: String,
    pub characterisation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocBrief {
    pub id: String,
    pub title: String,
    pub cause: Option<String>,
    pub tags: Vec<String>,
    /// Retrieval score; 0 for documents not retrieved for this anomaly.
    pub score: f64,
    /// First suggested check from the document, if it lists any.
    pub check: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Task {
    Characterise {
        signature: SignatureBrief,
        precedents: Vec<PrecedentBrief>,
    },
    Hypothesise {
        channels: Vec<String>,
        candidate_causes: Vec<String>,
        documents: Vec<DocBrief>,
        precedents: Vec<PrecedentBrief>,
    },
    Dialog {
        hypotheses: Vec<Hypothesis>,
        documents: Vec<DocBrief>,
        operator_input: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CitedChannel {
    pub channel: String,
    pub observed: f64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterisationReply {
    pub summary_text: String,
    pub cited_channels: Vec<CitedChannel>,
    pub candidate_causes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hypothesis {
    pub cause: String,
    pub rationale: String,
    /// Corpus document ids and/or lesson ids.
    pub evidence: Vec<String>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesesReply {
    pub reply: String,
    pub hypotheses: Vec<Hypothesis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogReply {
    pub reply: String,
    pub hypotheses: Vec<Hypothesis>,
    pub clarification: bool,
    pub agreed_cause: Option<String>,
}
