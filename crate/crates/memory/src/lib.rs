//! Case memory: operator-validated lessons, embedded and retrievable by
//! similarity to a new anomaly signature.

pub mod embed;
pub mod lesson;
pub mod store;

pub use embed::{cosine, tokenize, EmbedError, Embedder, HttpEmbedder, MockEmbedder, MOCK_DIMENSION};
pub use lesson::{DistilledLesson, Origin, RetrievalHit, CONFIDENCE_GATE};
pub use store::{MemoryError, MemoryStore, DEFAULT_K, DEFAULT_MIN_SIMILARITY};
