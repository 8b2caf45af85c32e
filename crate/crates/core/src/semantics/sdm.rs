use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Embedder, SemanticsError, SentenceEmbedding};
use crate::dataio::Caption;

/// Cosine dissimilarity `1 − u·v / (‖u‖‖v‖)`, in `[0, 2]`.
pub fn delta(u: &SentenceEmbedding, v: &SentenceEmbedding) -> Result<f64, SemanticsError> {
    if u.dim() != v.dim() {
        return Err(SemanticsError::DimensionMismatch(u.dim(), v.dim()));
    }
    if u.vector() == v.vector() {
        return Ok(0.0);
    }
    let dot: f64 = u.vector().iter().zip(v.vector()).map(|(a, b)| a * b).sum();
    Ok(1.0 - dot / (u.norm() * v.norm()))
}

/// How the complement caption is drawn from a row of the matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSampling {
    /// The row's argmax (ties to the lowest index).
    #[default]
    Farthest,
    /// Drawn with probability proportional to Δ.
    Proportional,
}

/// Pairwise Δ between the captions of one video, plus the farthest caption
/// for each row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticDistanceMatrix {
    pub video_id: String,
    pub n: usize,
    pub delta: Vec<Vec<f64>>,
    /// `None` only when the video has a single caption.
    pub complement: Vec<Option<usize>>,
}

impl SemanticDistanceMatrix {
    /// Builds the matrix from precomputed embeddings.
    pub fn from_embeddings(video_id: &str, embeddings: &[SentenceEmbedding]) -> Result<Self, SemanticsError> {
        let n = embeddings.len();
        if n == 0 {
            return Err(SemanticsError::NoCaptions(video_id.to_owned()));
        }
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = delta(&embeddings[i], &embeddings[j])?;
                d[i][j] = v;
                d[j][i] = v;
            }
        }
        let complement = (0..n).map(|i| row_argmax(&d[i], i)).collect();
        Ok(Self {
            video_id: video_id.to_owned(),
            n,
            delta: d,
            complement,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.delta[i][j]
    }

    /// Complement of `reference` under the given sampling rule.
    pub fn complement_of<R: Rng + ?Sized>(&self, reference: usize, sampling: PairSampling, rng: &mut R) -> Option<usize> {
        match sampling {
            PairSampling::Farthest => self.complement[reference],
            PairSampling::Proportional => {
                if self.n < 2 {
                    return None;
                }
                let row = &self.delta[reference];
                let total: f64 = (0..self.n).filter(|&j| j != reference).map(|j| row[j]).sum();
                if total > 0.0 {
                    let mut target = rng.random::<f64>() * total;
                    let mut last = None;
                    for j in (0..self.n).filter(|&j| j != reference) {
                        last = Some(j);
                        if row[j] > 0.0 {
                            if target < row[j] {
                                return Some(j);
                            }
                            target -= row[j];
                        }
                    }
                    last
                } else {
                    let k = rng.random_range(0..self.n - 1);
                    Some(if k >= reference { k + 1 } else { k })
                }
            }
        }
    }
}

fn row_argmax(row: &[f64], skip: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &v) in row.iter().enumerate() {
        if j == skip {
            continue;
        }
        match best {
            Some(b) if row[b] >= v => {}
            _ => best = Some(j),
        }
    }
    best
}

/// Embeds every caption and builds the matrix. Embedding failures carry the
/// offending caption index.
pub fn build_sdm<E: Embedder + ?Sized>(
    video_id: &str,
    captions: &[Caption],
    embedder: &E,
) -> Result<SemanticDistanceMatrix, SemanticsError> {
    let embeddings = captions
        .iter()
        .enumerate()
        .map(|(i, c)| {
            embedder.embed(&c.text).map_err(|e| SemanticsError::AtCaption {
                video_id: video_id.to_owned(),
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    SemanticDistanceMatrix::from_embeddings(video_id, &embeddings)
}

/// Picks a reference caption uniformly and pairs it with its complement.
/// Returns `None` for single-caption videos, which must be augmented instead.
pub fn select_pair<R: Rng + ?Sized>(sdm: &SemanticDistanceMatrix, sampling: PairSampling, rng: &mut R) -> Option<(usize, usize)> {
    if sdm.n < 2 {
        return None;
    }
    let reference = rng.random_range(0..sdm.n);
    sdm.complement_of(reference, sampling, rng).map(|c| (reference, c))
}
