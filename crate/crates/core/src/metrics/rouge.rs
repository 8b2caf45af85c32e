use super::{validate, EvalRecord, MetricsError};

/// Length of the longest common subsequence.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure of one candidate against one reference.
pub fn rouge_l_sentence(candidate: &[String], reference: &[String], beta: f64) -> f64 {
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / candidate.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let b2 = beta * beta;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Mean over records of the best F-measure against any reference.
pub fn rouge_l(records: &[EvalRecord], beta: f64) -> Result<f64, MetricsError> {
    validate(records)?;
    let sum: f64 = records
        .iter()
        .map(|rec| {
            rec.references
                .iter()
                .map(|r| rouge_l_sentence(&rec.candidate, r, beta))
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(sum / records.len() as f64)
}
