//! The lesson store.
//!
//! File format: NDJSON. The first line is a header
//! `{"format":"aura-lessons","version":1,"dimension":D,"count":N}`, followed
//! by exactly N lessons sorted by id. The count lets a load notice a file
//! truncated on a line boundary.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, EmbedError, Embedder};
use crate::lesson::{DistilledLesson, RetrievalHit};

pub const DEFAULT_MIN_SIMILARITY: f64 = 0.35;
pub const DEFAULT_K: usize = 3;
const FORMAT: &str = "aura-lessons";
const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("lesson {0} is not operator-validated with confidence above 0.9")]
    Unvalidated(String),
    #[error("lesson id {0} already stored")]
    Duplicate(String),
    #[error("lesson id must be non-empty")]
    EmptyId,
    #[error("embedding has dimension {got}, store expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("k must be >= 1")]
    InvalidK,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt lesson file: header: {0}")]
    CorruptHeader(String),
    #[error("corrupt lesson file: record {index}: {reason}")]
    CorruptRecord { index: usize, reason: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    dimension: usize,
    count: usize,
}

pub struct MemoryStore {
    embedder: Arc<dyn Embedder>,
    lessons: RwLock<BTreeMap<String, DistilledLesson>>,
    /// Write-through target, if any.
    backing: Option<PathBuf>,
}

impl std::fmt::Debug for MemoryStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MemoryStore")
            .field("dimension", &self.dimension())
            .field("len", &self.len())
            .field("backing", &self.backing)
            .finish()
    }
}

impl MemoryStore {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            embedder,
            lessons: RwLock::new(BTreeMap::new()),
            backing: None,
        }
    }

    /// Opens a write-through store: loads `path` if it exists, otherwise
    /// starts empty. Every successful insert rewrites the file.
    pub fn open(path: impl Into<PathBuf>, embedder: Arc<dyn Embedder>) -> Result<Self, MemoryError> {
        let path = path.into();
        let mut store = if path.exists() {
            Self::load(&path, embedder)?
        } else {
            Self::new(embedder)
        };
        store.backing = Some(path);
        Ok(store)
    }

    pub fn dimension(&self) -> usize {
        self.embedder.dimension()
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: &str) -> bool {
        self.read().contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<DistilledLesson> {
        self.read().get(id).cloned()
    }

    /// Snapshot of all lessons, ordered by id.
    pub fn lessons(&self) -> Vec<DistilledLesson> {
        self.read().values().cloned().collect()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, BTreeMap<String, DistilledLesson>> {
        self.lessons.read().unwrap_or_else(|e| e.into_inner())
    }

    pub fn insert(&self, mut lesson: DistilledLesson) -> Result<String, MemoryError> {
        if !lesson.passes_gate() {
            return Err(MemoryError::Unvalidated(lesson.id));
        }
        if lesson.id.is_empty() {
            return Err(MemoryError::EmptyId);
        }
        if lesson.embedding.is_empty() {
            lesson.embedding = self.embedder.embed(&lesson.anomaly_text)?;
        }
        self.check_dimension(&lesson.embedding)?;

        let mut map = self.lessons.write().unwrap_or_else(|e| e.into_inner());
        if map.contains_key(&lesson.id) {
            return Err(MemoryError::Duplicate(lesson.id));
        }
        let id = lesson.id.clone();
        map.insert(id.clone(), lesson);
        if let Some(path) = &self.backing {
            if let Err(e) = write_file(path, self.dimension(), &map) {
                map.remove(&id);
                return Err(e);
            }
        }
        Ok(id)
    }

    fn check_dimension(&self, v: &[f64]) -> Result<(), MemoryError> {
        if v.len() != self.dimension() {
            return Err(MemoryError::Dimension {
                expected: self.dimension(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Top-`k` lessons by cosine similarity to `text`, keeping only those at
    /// or above `min_similarity`. Ties go to the smaller id.
    pub fn query(&self, text: &str, k: usize, min_similarity: f64) -> Result<Vec<RetrievalHit>, MemoryError> {
        if k == 0 {
            return Err(MemoryError::InvalidK);
        }
        let map = self.read();
        if map.is_empty() {
            return Ok(Vec::new());
        }
        let q = self.embedder.embed(text)?;
        let mut hits: Vec<RetrievalHit> = map
            .values()
            .filter(|l| l.passes_gate() && l.embedding.len() == q.len())
            .map(|l| RetrievalHit {
                similarity: cosine(&q, &l.embedding),
                lesson: l.clone(),
            })
            .filter(|h| h.similarity >= min_similarity)
            .collect();
        // BTreeMap iteration is id-ordered and the sort is stable.
        hits.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
        hits.truncate(k);
        Ok(hits)
    }

    pub fn persist(&self, path: impl AsRef<Path>) -> Result<(), MemoryError> {
        write_file(path.as_ref(), self.dimension(), &self.read())
    }

    pub fn to_ndjson(&self) -> String {
        render(self.dimension(), &self.read())
    }

    /// Loads a store. Any defect fails the whole load.
    pub fn load(path: impl AsRef<Path>, embedder: Arc<dyn Embedder>) -> Result<Self, MemoryError> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|source| MemoryError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_reader(io::BufReader::new(file), embedder)
    }

    pub fn from_reader(reader: impl BufRead, embedder: Arc<dyn Embedder>) -> Result<Self, MemoryError> {
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| MemoryError::CorruptHeader("empty file".into()))?
            .map_err(|e| MemoryError::CorruptHeader(e.to_string()))?;
        let header: Header = serde_json::from_str(&header_line)
            .map_err(|e| MemoryError::CorruptHeader(e.to_string()))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(MemoryError::CorruptHeader(format!(
                "unsupported format {} v{}",
                header.format, header.version
            )));
        }
        if header.dimension != embedder.dimension() {
            return Err(MemoryError::CorruptHeader(format!(
                "dimension {} does not match embedder dimension {}",
                header.dimension,
                embedder.dimension()
            )));
        }

        let mut map = BTreeMap::new();
        let mut index = 0;
        for line in lines {
            let corrupt = |reason: String| MemoryError::CorruptRecord { index, reason };
            let line = line.map_err(|e| corrupt(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let lesson: DistilledLesson =
                serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if !lesson.passes_gate() {
                return Err(corrupt("lesson does not pass the validation gate".into()));
            }
            if lesson.embedding.len() != header.dimension {
                return Err(corrupt(format!(
                    "embedding dimension {}",
                    lesson.embedding.len()
                )));
            }
            if lesson.embedding.iter().any(|x| !x.is_finite()) {
                return Err(corrupt("non-finite embedding".into()));
            }
            if map.insert(lesson.id.clone(), lesson).is_some() {
                return Err(corrupt("duplicate id".into()));
            }
            index += 1;
        }
        if index != header.count {
            return Err(MemoryError::CorruptRecord {
                index,
                reason: format!("expected {} records, found {}", header.count, index),
            });
        }
        Ok(Self {
            embedder,
            lessons: RwLock::new(map),
            backing: None,
        })
    }
}

fn render(dimension: usize, map: &BTreeMap<String, DistilledLesson>) -> String {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        dimension,
        count: map.len(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for lesson in map.values() {
        out.push_str(&serde_json::to_string(lesson).expect("lesson serializes"));
        out.push('\n');
    }
    out
}

/// Writes to a sibling temp file and renames over the target, so readers
/// never see a half-written store.
fn write_file(path: &Path, dimension: usize, map: &BTreeMap<String, DistilledLesson>) -> Result<(), MemoryError> {
    let io_err = |source| MemoryError::Io {
        path: path.to_owned(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io_err)?;
    f.write_all(render(dimension, map).as_bytes()).map_err(io_err)?;
    f.sync_all().map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}
