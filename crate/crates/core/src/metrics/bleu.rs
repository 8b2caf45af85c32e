use serde::{Deserialize, Serialize};

use super::{ngrams, validate, EvalRecord, MetricsError};

/// Replacement for a zero modified precision under [`BleuSmoothing::Epsilon`].
pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BleuSmoothing {
    #[default]
    None,
    /// Zero precisions become [`BLEU_EPSILON`].
    Epsilon,
}

/// Reference length closest to `c`, ties to the shorter one.
fn closest_ref_len(c: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(c), r))
        .expect("validated: at least one reference")
}

/// Clipped n-gram matches and candidate n-gram totals for orders `1..=n`,
/// pooled over the corpus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NgramCounts {
    pub matched: Vec<usize>,
    pub total: Vec<usize>,
    pub candidate_len: usize,
    /// Sum of the closest reference lengths.
    pub reference_len: usize,
}

pub fn modified_precision_counts(records: &[EvalRecord], n: usize) -> Result<NgramCounts, MetricsError> {
    validate(records)?;
    if n == 0 {
        return Err(MetricsError::ZeroOrder);
    }
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for rec in records {
        cand_len += rec.candidate.len();
        ref_len += closest_ref_len(rec.candidate.len(), &rec.references);
        for k in 1..=n {
            let cand = ngrams(&rec.candidate, k);
            let refs: Vec<_> = rec.references.iter().map(|r| ngrams(r, k)).collect();
            for (gram, &count) in &cand {
                let max_ref = refs.iter().map(|r| r.get(gram).copied().unwrap_or(0)).max().unwrap_or(0);
                matched[k - 1] += count.min(max_ref);
                total[k - 1] += count;
            }
        }
    }
    Ok(NgramCounts {
        matched,
        total,
        candidate_len: cand_len,
        reference_len: ref_len,
    })
}

/// Corpus BLEU-`n`: clipped n-gram counts are pooled over all records, then
/// the geometric mean of the precisions is scaled by the brevity penalty.
pub fn bleu(records: &[EvalRecord], n: usize, smoothing: BleuSmoothing) -> Result<f64, MetricsError> {
    let NgramCounts {
        matched,
        total,
        candidate_len: cand_len,
        reference_len: ref_len,
    } = modified_precision_counts(records, n)?;
    if cand_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for k in 0..n {
        let p = if total[k] == 0 {
            0.0
        } else {
            matched[k] as f64 / total[k] as f64
        };
        let p = match (p, smoothing) {
            (p, _) if p > 0.0 => p,
            (_, BleuSmoothing::None) => return Ok(0.0),
            (_, BleuSmoothing::Epsilon) => BLEU_EPSILON,
        };
        log_sum += p.ln();
    }
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(bp * (log_sum / n as f64).exp())
}
