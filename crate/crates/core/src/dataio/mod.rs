//! Datasets on disk: feature files, caption files, manifests, vocabulary and
//! the synthetic generator.

mod dataset;
mod features;
mod synth;
mod vocab;

use std::path::{Path, PathBuf};

pub use dataset::{
    read_captions, read_jsonl, write_captions, write_jsonl, Caption, CaptionRecord, Dataset, DatasetKind,
    DatasetManifest, ManifestEntry, Split, VideoSample,
};
pub use features::{decode_features, encode_features, load_features, write_features, Frames};
pub use synth::{synth_dataset, SynthConfig, SynthData, SynthVideo, FEATURE_NOISE_STD, MAX_CAPTIONS_PER_VIDEO};
pub use vocab::{encode_caption, tokenize, Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<DataError>,
    },
    #[error("bad magic bytes (expected \"MTLF\")")]
    BadMagic,
    #[error("unsupported feature file version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("zero frames")]
    ZeroFrames,
    #[error("zero feature dimension")]
    ZeroDimension,
    #[error("frame {frame} has dimension {actual}, expected {expected}")]
    RaggedFrames { frame: usize, expected: usize, actual: usize },
    #[error("non-finite value in frame {frame}")]
    NonFiniteFeature { frame: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("video {0:?} has a caption that is empty after tokenization")]
    EmptyCaption(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{0}")]
    InvalidArgument(String),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn json(path: &Path, line: usize, source: serde_json::Error) -> Self {
        DataError::Json {
            path: path.to_path_buf(),
            line,
            source,
        }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        DataError::InFile {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }
}
