//! Caption metrics over multi-reference corpora: BLEU-n, ROUGE-L and CIDEr.

mod bleu;
mod cider;
mod rouge;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu, modified_precision_counts, BleuSmoothing, NgramCounts, BLEU_EPSILON};
pub use cider::{cider, cider_per_record, CIDER_SCALE};
pub use rouge::{lcs_len, rouge_l, rouge_l_sentence};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("no records to score")]
    EmptyCorpus,
    #[error("record {0:?} has no references")]
    NoReferences(String),
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
    #[error("CIDEr needs at least 2 distinct reference sentences, found {0}")]
    TooFewReferences(usize),
    #[error("CIDEr length penalty sigma must be positive, got {0}")]
    BadSigma(f64),
}

/// A generated caption and the human captions of the same video.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub video_id: String,
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl EvalRecord {
    pub fn new(video_id: impl Into<String>, candidate: Vec<String>, references: Vec<Vec<String>>) -> Self {
        Self {
            video_id: video_id.into(),
            candidate,
            references,
        }
    }
}

pub(crate) fn validate(records: &[EvalRecord]) -> Result<(), MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    if let Some(r) = records.iter().find(|r| r.references.is_empty()) {
        return Err(MetricsError::NoReferences(r.video_id.clone()));
    }
    Ok(())
}

pub(crate) type Counts<'a> = BTreeMap<&'a [String], usize>;

/// Counts of every length-`n` window of `tokens`.
pub(crate) fn ngrams(tokens: &[String], n: usize) -> Counts<'_> {
    let mut out = BTreeMap::new();
    if n == 0 || tokens.len() < n {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}
