//! Text embedders. The mock is a hashed bag of tokens; the HTTP embedder
//! talks to any endpoint accepting `{model, input}` and answering
//! `{embedding}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub const MOCK_DIMENSION: usize = 256;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    /// Network-level failure; the caller may retry.
    #[error("embedding backend unreachable: {0}")]
    Transport(String),
    #[error("embedding backend returned an invalid reply: {0}")]
    BadReply(String),
}

impl EmbedError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, EmbedError::Transport(_))
    }
}

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    /// Returns an L2-normalized vector of length [`Embedder::dimension`].
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Words of the signature template and plain English glue. They appear in
/// every signature, so hashing them would make every pair look alike.
const STOPWORDS: &[&str] = &[
    "a", "an", "and", "anomalous", "anomaly", "are", "as", "at", "by", "channels",
    "consecutive", "deg", "deviation", "dof", "expected", "for", "from", "in", "is", "it",
    "m", "md2", "observed", "of", "on", "or", "p_level", "s", "signature", "than", "that",
    "the", "this", "threshold", "to", "trigger_t", "was", "were", "while", "with", "z",
];

/// Lowercase alphanumeric/underscore runs; numbers and stopwords dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .filter(|t| !t.starts_with(|c: char| c.is_ascii_digit()))
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    dim: usize,
}

impl MockEmbedder {
    pub fn new() -> Self {
        Self::with_dimension(MOCK_DIMENSION)
    }

    pub fn with_dimension(dim: usize) -> Self {
        assert!(dim > 0);
        Self { dim }
    }
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new()
    }
}

impl Embedder for MockEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut v = vec![0.0; self.dim];
        for tok in tokenize(text) {
            v[(fnv1a(tok.as_bytes()) % self.dim as u64) as usize] += 1.0;
        }
        // Text made only of numbers and template words still needs a
        // direction; give it a fixed one rather than the zero vector.
        if v.iter().all(|x| *x == 0.0) {
            v[0] = 1.0;
        }
        normalize(&mut v);
        Ok(v)
    }
}

pub(crate) fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbedReply {
    embedding: Vec<f64>,
}

pub struct HttpEmbedder {
    endpoint: String,
    model: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        dim: usize,
        timeout: Duration,
    ) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            dim,
            client,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&EmbedRequest {
                model: &self.model,
                input: text,
            })
            .send()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        if resp.status().is_server_error() {
            return Err(EmbedError::Transport(format!("status {}", resp.status())));
        }
        if !resp.status().is_success() {
            return Err(EmbedError::BadReply(format!("status {}", resp.status())));
        }
        let reply: EmbedReply = resp
            .json()
            .map_err(|e| EmbedError::BadReply(e.to_string()))?;
        let mut v = reply.embedding;
        if v.len() != self.dim {
            return Err(EmbedError::BadReply(format!(
                "dimension {} (expected {})",
                v.len(),
                self.dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) || normalize(&mut v) == 0.0 {
            return Err(EmbedError::BadReply("degenerate embedding".into()));
        }
        Ok(v)
    }
}

/// Cosine similarity, clamped to [-1, 1]. Zero vectors score 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}
