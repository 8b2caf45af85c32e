use std::collections::{BTreeMap, BTreeSet};

use super::{ngrams, validate, Counts, EvalRecord, MetricsError};

/// Final multiplier of the averaged similarity.
pub const CIDER_SCALE: f64 = 10.0;

type Weights<'a> = BTreeMap<&'a [String], f64>;

fn tfidf<'a>(counts: &Counts<'a>, idf: &dyn Fn(&[String]) -> f64) -> Weights<'a> {
    counts.iter().map(|(g, &c)| (*g, c as f64 * idf(g))).collect()
}

fn norm(w: &Weights<'_>) -> f64 {
    w.values().map(|v| v * v).sum::<f64>().sqrt()
}

fn cosine(a: &Weights<'_>, b: &Weights<'_>) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    dot / (na * nb)
}

/// CIDEr of every record against its own references.
///
/// For each order `n`, terms are weighted by raw count times
/// `ln(N) − ln(df)`, where `df` counts records whose references contain
/// the n-gram; candidate/reference cosines are multiplied by the Gaussian
/// length penalty `exp(−(l_c − l_r)² / 2σ²)` and averaged over references and
/// orders, then scaled by 10.
pub fn cider_per_record(records: &[EvalRecord], n_max: usize, sigma: f64) -> Result<Vec<f64>, MetricsError> {
    validate(records)?;
    if n_max == 0 {
        return Err(MetricsError::ZeroOrder);
    }
    if !(sigma > 0.0) {
        return Err(MetricsError::BadSigma(sigma));
    }
    let distinct: BTreeSet<&Vec<String>> = records.iter().flat_map(|r| &r.references).collect();
    if distinct.len() < 2 {
        return Err(MetricsError::TooFewReferences(distinct.len()));
    }
    let log_n = (records.len() as f64).ln();
    let mut scores = vec![0.0; records.len()];
    for n in 1..=n_max {
        let ref_counts: Vec<Vec<Counts<'_>>> = records
            .iter()
            .map(|r| r.references.iter().map(|s| ngrams(s, n)).collect())
            .collect();
        let mut df: BTreeMap<&[String], usize> = BTreeMap::new();
        for refs in &ref_counts {
            let grams: BTreeSet<&[String]> = refs.iter().flat_map(|c| c.keys().copied()).collect();
            for g in grams {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        let idf = |g: &[String]| log_n - (df.get(g).copied().unwrap_or(0).max(1) as f64).ln();
        for (k, rec) in records.iter().enumerate() {
            let cand = tfidf(&ngrams(&rec.candidate, n), &idf);
            let lc = rec.candidate.len() as f64;
            let mut sum = 0.0;
            for (r, counts) in rec.references.iter().zip(&ref_counts[k]) {
                let refw = tfidf(counts, &idf);
                let delta = lc - r.len() as f64;
                sum += cosine(&cand, &refw) * (-(delta * delta) / (2.0 * sigma * sigma)).exp();
            }
            scores[k] += sum / rec.references.len() as f64;
        }
    }
    Ok(scores.into_iter().map(|s| CIDER_SCALE * s / n_max as f64).collect())
}

/// Corpus mean of [`cider_per_record`].
pub fn cider(records: &[EvalRecord], n_max: usize, sigma: f64) -> Result<f64, MetricsError> {
    let per = cider_per_record(records, n_max, sigma)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::tokenize;

    fn rec(id: &str, c: &str, refs: &[&str]) -> EvalRecord {
        EvalRecord::new(id, tokenize(c), refs.iter().map(|r| tokenize(r)).collect())
    }

    #[test]
    fn identical_two_video_corpus() {
        let r = [
            rec("a", "a man plays guitar", &["a man plays guitar"]),
            rec("b", "a dog eats food", &["a dog eats food"]),
        ];
        let s = cider_per_record(&r, 4, 6.0).unwrap();
        assert!((s[0] - s[1]).abs() < 1e-12);
        assert!((s[0] - CIDER_SCALE).abs() < 1e-12);
    }

    #[test]
    fn disjoint_is_zero() {
        let r = [
            rec("a", "zebra jumps", &["a man plays guitar"]),
            rec("b", "a dog eats food", &["a dog eats food"]),
        ];
        assert_eq!(cider_per_record(&r, 4, 6.0).unwrap()[0], 0.0);
    }

    #[test]
    fn needs_distinct_references() {
        let r = [rec("a", "x y", &["x y"]), rec("b", "x y", &["x y"])];
        assert_eq!(cider(&r, 4, 6.0), Err(MetricsError::TooFewReferences(1)));
        assert_eq!(cider(&[], 4, 6.0), Err(MetricsError::EmptyCorpus));
    }
}
