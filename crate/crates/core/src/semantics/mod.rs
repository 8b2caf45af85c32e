//! Sentence embeddings, the semantic distance Δ, per-video distance
//! matrices with complement selection, and stop-word augmentation.

mod augment;
mod embed;
mod sdm;

use std::path::PathBuf;

pub use augment::{augment, Augmented, StopWordList};
pub use embed::{
    embed, fnv1a64, sha256_hex, Embedder, EmbeddingMode, EmbeddingSource, PrecomputedEmbedder, SentenceEmbedding,
    SurrogateEmbedder, SURROGATE_DIM,
};
pub use sdm::{build_sdm, delta, select_pair, PairSampling, SemanticDistanceMatrix};

#[derive(Debug, thiserror::Error)]
pub enum SemanticsError {
    #[error("caption is empty after tokenization")]
    EmptyCaption,
    #[error("no precomputed vector for caption sha256 {0}")]
    MissingVector(String),
    #[error("embedding has zero norm")]
    ZeroEmbedding,
    #[error("embedding has non-finite entries")]
    NonFiniteEmbedding,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("video {0:?} has no captions")]
    NoCaptions(String),
    #[error("video {video_id:?} caption {index}: {source}")]
    AtCaption {
        video_id: String,
        index: usize,
        #[source]
        source: Box<SemanticsError>,
    },
    #[error("stop-word list {0} is empty")]
    EmptyStopWords(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}
