//! Local troubleshooting corpus and a small lexical search index over it.
//!
//! A document is a text file with a front-matter block:
//!
//! ```text
//! ---
//! id: kb-example
//! title: Short title
//! tags: comma, separated, words
//! cause: optional root-cause label
//! ---
//! body...
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Results scoring below this are dropped.
pub const SCORE_FLOOR: f64 = 0.05;

const BUNDLED: [(&str, &str); 4] = [
    ("kb-ballast-trim.md", include_str!("../corpus/kb-ballast-trim.md")),
    ("kb-magnetic-interference.md", include_str!("../corpus/kb-magnetic-interference.md")),
    ("kb-tether-entanglement.md", include_str!("../corpus/kb-tether-entanglement.md")),
    ("kb-thruster-fouling.md", include_str!("../corpus/kb-thruster-fouling.md")),
];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("corpus is empty")]
    Empty,
    #[error("{source_name}: missing or malformed front matter")]
    FrontMatter { source_name: String },
    #[error("{source_name}: missing field `{field}`")]
    MissingField { source_name: String, field: &'static str },
    #[error("document {0} has an empty body")]
    EmptyBody(String),
    #[error("duplicate document id {0}")]
    DuplicateId(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeDoc {
    pub id: String,
    pub title: String,
    pub tags: Vec<String>,
    /// Root-cause label the document is about, when it has one.
    pub cause: Option<String>,
    pub body: String,
}

impl KnowledgeDoc {
    pub fn parse(source_name: &str, text: &str) -> Result<Self, CorpusError> {
        let fm_err = || CorpusError::FrontMatter {
            source_name: source_name.to_owned(),
        };
        let rest = text.trim_start().strip_prefix("---").ok_or_else(fm_err)?;
        let end = rest.find("\n---").ok_or_else(fm_err)?;
        let (front, body) = (&rest[..end], &rest[end + 4..]);

        let mut fields = BTreeMap::new();
        for line in front.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once(':').ok_or_else(fm_err)?;
            fields.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        let mut take = |field: &'static str| {
            fields
                .remove(field)
                .filter(|v| !v.is_empty())
                .ok_or_else(|| CorpusError::MissingField {
                    source_name: source_name.to_owned(),
                    field,
                })
        };
        let id = take("id")?;
        let title = take("title")?;
        let tags = take("tags")?
            .split(',')
            .map(|t| t.trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        let cause = take("cause").ok();
        let body = body.trim().to_owned();
        if body.is_empty() {
            return Err(CorpusError::EmptyBody(id));
        }
        Ok(Self {
            id,
            title,
            tags,
            cause,
            body,
        })
    }
}

/// Lowercase word tokens; digits-only and very short words are skipped.
pub fn terms(text: &str) -> impl Iterator<Item = String> + '_ {
    const STOP: &[&str] = &[
        "the", "and", "for", "with", "that", "this", "from", "are", "was", "not", "its", "may",
        "but", "has", "have", "than", "into", "when", "while", "own",
    ];
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| t.len() > 2)
        .map(str::to_lowercase)
        .filter(|t| !t.chars().all(|c| c.is_ascii_digit()))
        .filter(|t| !STOP.contains(&t.as_str()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub doc: Arc<KnowledgeDoc>,
    pub score: f64,
}

/// Log-scaled TF × IDF with cosine length normalization. Immutable once
/// built.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    docs: Vec<Arc<KnowledgeDoc>>,
    /// Per document: term -> normalized weight.
    weights: Vec<BTreeMap<String, f64>>,
    idf: BTreeMap<String, f64>,
}

impl CorpusIndex {
    pub fn build(docs: Vec<KnowledgeDoc>) -> Result<Self, CorpusError> {
        if docs.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut seen = BTreeSet::new();
        for d in &docs {
            if !seen.insert(d.id.clone()) {
                return Err(CorpusError::DuplicateId(d.id.clone()));
            }
            if d.body.trim().is_empty() {
                return Err(CorpusError::EmptyBody(d.id.clone()));
            }
        }
        let mut docs: Vec<Arc<KnowledgeDoc>> = docs.into_iter().map(Arc::new).collect();
        docs.sort_by(|a, b| a.id.cmp(&b.id));

        let tfs: Vec<BTreeMap<String, usize>> = docs
            .iter()
            .map(|d| {
                let mut tf = BTreeMap::new();
                let text = format!("{} {} {}", d.title, d.tags.join(" "), d.body);
                for t in terms(&text) {
                    *tf.entry(t).or_insert(0) += 1;
                }
                tf
            })
            .collect();
        let n = docs.len() as f64;
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for tf in &tfs {
            for t in tf.keys() {
                *df.entry(t.clone()).or_insert(0) += 1;
            }
        }
        let idf: BTreeMap<String, f64> = df
            .into_iter()
            .map(|(t, c)| (t, (1.0 + n / c as f64).ln()))
            .collect();
        let weights = tfs
            .into_iter()
            .map(|tf| {
                let mut w: BTreeMap<String, f64> = tf
                    .into_iter()
                    .map(|(t, c)| {
                        let v = (1.0 + (c as f64).ln()) * idf[&t];
                        (t, v)
                    })
                    .collect();
                let norm = w.values().map(|v| v * v).sum::<f64>().sqrt();
                w.values_mut().for_each(|v| *v /= norm);
                w
            })
            .collect();
        Ok(Self { docs, weights, idf })
    }

    pub fn bundled() -> Self {
        let docs = BUNDLED
            .iter()
            .map(|(name, text)| KnowledgeDoc::parse(name, text).expect("bundled corpus parses"))
            .collect();
        Self::build(docs).expect("bundled corpus is valid")
    }

    /// Loads every `*.md` / `*.txt` file in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let dir = dir.as_ref();
        let io_err = |path: &Path| {
            let path = path.to_owned();
            move |source| CorpusError::Io { path, source }
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("md" | "txt")))
            .collect();
        paths.sort();
        let mut docs = Vec::with_capacity(paths.len());
        for p in &paths {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            docs.push(KnowledgeDoc::parse(&p.display().to_string(), &text)?);
        }
        Self::build(docs)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[Arc<KnowledgeDoc>] {
        &self.docs
    }

    pub fn get(&self, id: &str) -> Option<&Arc<KnowledgeDoc>> {
        self.docs.iter().find(|d| d.id == id)
    }

    /// Up to `n` documents ranked by score (descending, then id).
    pub fn search(&self, query: &str, n: usize) -> Vec<SearchHit> {
        let mut q: BTreeMap<String, f64> = BTreeMap::new();
        for t in terms(query) {
            if let Some(idf) = self.idf.get(&t) {
                q.insert(t, *idf);
            }
        }
        let qnorm = q.values().map(|v| v * v).sum::<f64>().sqrt();
        if qnorm == 0.0 {
            return Vec::new();
        }
        let mut hits: Vec<SearchHit> = self
            .docs
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| {
                let dot: f64 = q.iter().filter_map(|(t, qv)| w.get(t).map(|dv| qv * dv)).sum();
                SearchHit {
                    doc: d.clone(),
                    score: dot / qnorm,
                }
            })
            .filter(|h| h.score >= SCORE_FLOOR)
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.doc.id.cmp(&b.doc.id)));
        hits.truncate(n);
        hits
    }
}
