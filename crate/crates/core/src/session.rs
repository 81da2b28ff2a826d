//! Session logs: the full record of one diagnostic episode.
//!
//! Stored as pretty-printed JSON, one file per session, named
//! `<session_id>.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use aura_agents::{ChatMessage, Hypothesis, ProblemCharacterisation, Role};
use aura_detect::AnomalySignature;
use aura_memory::CONFIDENCE_GATE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinalDiagnosis {
    pub cause: String,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionLog {
    pub session_id: String,
    pub scenario_id: String,
    pub signature: AnomalySignature,
    pub characterisation: ProblemCharacterisation,
    pub transcript: Vec<ChatMessage>,
    /// Ranking when the session ended.
    pub hypotheses: Vec<Hypothesis>,
    pub final_diagnosis: Option<FinalDiagnosis>,
    pub operator_confidence: f64,
    pub operator_validated: bool,
    pub turn_count: usize,
    pub css: Option<u8>,
    /// The backend failed at some point and a fallback was used.
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("session log invalid: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt session file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

impl SessionLog {
    pub fn validate(&self) -> Result<(), SessionError> {
        let operators = self.transcript.iter().filter(|m| m.role == Role::Operator).count();
        if operators != self.turn_count {
            return Err(SessionError::Invalid(format!(
                "turn_count {} but {} operator messages",
                self.turn_count, operators
            )));
        }
        if let Some(c) = self.css {
            if !(1..=5).contains(&c) {
                return Err(SessionError::Invalid(format!("css {c} outside 1..=5")));
            }
        }
        if !(0.0..=1.0).contains(&self.operator_confidence) {
            return Err(SessionError::Invalid("operator_confidence outside [0, 1]".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("session serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, SessionError> {
        let log: SessionLog = serde_json::from_str(s).map_err(|e| SessionError::Invalid(e.to_string()))?;
        log.validate()?;
        Ok(log)
    }

    pub fn file_name(&self) -> String {
        format!("{}.json", self.session_id)
    }

    /// Writes `<dir>/<session_id>.json` via a temp file and rename.
    pub fn persist(&self, dir: &Path) -> Result<PathBuf, SessionError> {
        let path = dir.join(self.file_name());
        let io = |source| SessionError::Io {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        let tmp = dir.join(format!(".{}.tmp", self.file_name()));
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(self.to_json().as_bytes()).map_err(io)?;
        f.write_all(b"\n").map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self, SessionError> {
        let text = fs::read_to_string(path).map_err(|source| SessionError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| SessionError::Corrupt {
            path: path.to_owned(),
            reason: e.to_string(),
        })
    }
}

/// The session may end: the operator confirmed and is more than 90% sure.
pub fn terminate_check(operator_confidence: f64, confirmed: bool) -> bool {
    confirmed && operator_confidence > CONFIDENCE_GATE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub css: Option<u8>,
    pub turns: usize,
}

pub fn record_metrics(log: &SessionLog) -> Metrics {
    Metrics {
        css: log.css,
        turns: log.transcript.iter().filter(|m| m.role == Role::Operator).count(),
    }
}
