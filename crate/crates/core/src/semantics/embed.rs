use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SemanticsError;
use crate::dataio::tokenize;

/// Dimension of the hashed bag-of-words surrogate.
pub const SURROGATE_DIM: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    Surrogate,
    Precomputed,
}

/// A sentence vector with nonzero, finite norm.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceEmbedding {
    vector: Vec<f64>,
    source: EmbeddingSource,
}

impl SentenceEmbedding {
    pub fn new(vector: Vec<f64>, source: EmbeddingSource) -> Result<Self, SemanticsError> {
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(SemanticsError::NonFiniteEmbedding);
        }
        if vector.iter().all(|&v| v == 0.0) {
            return Err(SemanticsError::ZeroEmbedding);
        }
        Ok(Self { vector, source })
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn source(&self) -> EmbeddingSource {
        self.source
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Maps caption text to a sentence embedding.
pub trait Embedder {
    fn embed(&self, caption: &str) -> Result<SentenceEmbedding, SemanticsError>;
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Hashed bag-of-words: each token's FNV-1a hash selects one of
/// [`SURROGATE_DIM`] buckets, counts are L2-normalized.
#[derive(Clone, Copy, Debug, Default)]
pub struct SurrogateEmbedder;

impl Embedder for SurrogateEmbedder {
    fn embed(&self, caption: &str) -> Result<SentenceEmbedding, SemanticsError> {
        let tokens = tokenize(caption);
        if tokens.is_empty() {
            return Err(SemanticsError::EmptyCaption);
        }
        let mut v = vec![0.0; SURROGATE_DIM];
        for t in &tokens {
            v[(fnv1a64(t.as_bytes()) % SURROGATE_DIM as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        SentenceEmbedding::new(v, EmbeddingSource::Surrogate)
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingRecord {
    sha256: String,
    vector: Vec<f64>,
}

/// Vectors keyed by the SHA-256 of the caption's UTF-8 text.
#[derive(Clone, Debug, Default)]
pub struct PrecomputedEmbedder {
    vectors: HashMap<String, Vec<f64>>,
    dim: Option<usize>,
}

impl PrecomputedEmbedder {
    pub fn load(path: &Path) -> Result<Self, SemanticsError> {
        let text = fs::read_to_string(path).map_err(|e| SemanticsError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut out = Self::default();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: EmbeddingRecord = serde_json::from_str(line).map_err(|e| SemanticsError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            out.insert(&rec.sha256, rec.vector)?;
        }
        Ok(out)
    }

    pub fn insert(&mut self, sha256: &str, vector: Vec<f64>) -> Result<(), SemanticsError> {
        match self.dim {
            Some(d) if d != vector.len() => {
                return Err(SemanticsError::DimensionMismatch(d, vector.len()));
            }
            None => self.dim = Some(vector.len()),
            _ => {}
        }
        self.vectors.insert(sha256.to_ascii_lowercase(), vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl Embedder for PrecomputedEmbedder {
    fn embed(&self, caption: &str) -> Result<SentenceEmbedding, SemanticsError> {
        if tokenize(caption).is_empty() {
            return Err(SemanticsError::EmptyCaption);
        }
        let key = sha256_hex(caption);
        let v = self
            .vectors
            .get(&key)
            .ok_or_else(|| SemanticsError::MissingVector(key.clone()))?;
        SentenceEmbedding::new(v.clone(), EmbeddingSource::Precomputed)
    }
}

/// Either embedder, selected at run time.
#[derive(Clone, Debug, Default)]
pub enum EmbeddingMode {
    #[default]
    Surrogate,
    Precomputed(PrecomputedEmbedder),
}

impl Embedder for EmbeddingMode {
    fn embed(&self, caption: &str) -> Result<SentenceEmbedding, SemanticsError> {
        match self {
            EmbeddingMode::Surrogate => SurrogateEmbedder.embed(caption),
            EmbeddingMode::Precomputed(p) => p.embed(caption),
        }
    }
}

pub fn embed(caption: &str, mode: &EmbeddingMode) -> Result<SentenceEmbedding, SemanticsError> {
    mode.embed(caption)
}
