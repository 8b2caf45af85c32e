use serde::{Deserialize, Serialize};

use super::{MultitaskError, TaskVars};
use crate::dataio::DatasetKind;
use crate::model::{teacher_force, AttentionMemory, Dropout, EncodedVideo};
use crate::numerics::{Tape, Var};

/// Internal distributions must sum to one within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Maps the dataset kind to the agreement weight η.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EtaPolicy {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_override: Option<f64>,
}

impl EtaPolicy {
    pub fn with_override(eta: f64) -> Result<Self, MultitaskError> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(MultitaskError::EtaOutOfRange(eta));
        }
        Ok(Self {
            eta_override: Some(eta),
        })
    }

    /// Single-caption data gets 0, multi-caption data 1.
    pub fn eta_for(&self, kind: DatasetKind) -> f64 {
        self.eta_override.unwrap_or(match kind {
            DatasetKind::Single => 0.0,
            DatasetKind::Multi => 1.0,
        })
    }

    pub fn eta_for_name(&self, kind: &str) -> Result<f64, MultitaskError> {
        let kind: DatasetKind = kind
            .parse()
            .map_err(|_| MultitaskError::UnknownKind(kind.to_owned()))?;
        Ok(self.eta_for(kind))
    }
}

/// Values of each loss term for one training example.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ce_reference: f64,
    pub ce_complement: f64,
    pub agreement: f64,
    pub eta: f64,
    pub lambda: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `λ·(ce_reference + ce_complement + η·agreement)` recomputed from the parts.
    pub fn recomposed(&self) -> f64 {
        self.lambda * (self.ce_reference + self.ce_complement + self.eta * self.agreement)
    }

    /// Absolute gap between `total` and its recomposition.
    pub fn decomposition_error(&self) -> f64 {
        (self.total - self.recomposed()).abs()
    }
}

/// Taped loss handles plus their values.
#[derive(Clone, Copy, Debug)]
pub struct MtlLoss {
    pub total: Var,
    pub ce_reference: Var,
    pub ce_complement: Var,
    pub agreement: Var,
    pub breakdown: LossBreakdown,
}

fn check_normalized(tape: &Tape, dists: &[Var], decoder: usize) -> Result<(), MultitaskError> {
    for (step, &p) in dists.iter().enumerate() {
        let sum: f64 = tape.value(p).data().iter().sum();
        if !((sum - 1.0).abs() <= NORMALIZATION_TOL) {
            return Err(MultitaskError::NotNormalized { decoder, step, sum });
        }
    }
    Ok(())
}

/// `−Σᵢ log pᵢ[tokens[i+1]]`.
fn cross_entropy(tape: &mut Tape, dists: &[Var], tokens: &[usize]) -> Result<Var, MultitaskError> {
    let mut logs = Vec::with_capacity(dists.len());
    for (i, &p) in dists.iter().enumerate() {
        let pick = tape.pick(p, tokens[i + 1])?;
        logs.push(tape.log(pick)?);
    }
    let s = tape.add_all(&logs)?;
    Ok(tape.scale(s, -1.0))
}

/// The joint objective for one video.
///
/// Decoder 0 is teacher-forced on `x1` and decoder 1 on `xc`; the agreement
/// term teacher-forces both decoders on `x1` and sums the absolute gap between
/// the probabilities they give its ground-truth tokens.
#[allow(clippy::too_many_arguments)]
pub fn mtl_loss(
    tape: &mut Tape,
    vars: &TaskVars,
    nu: &EncodedVideo,
    x1: &[usize],
    xc: &[usize],
    eta: f64,
    lambda: f64,
    dropout: &mut Dropout<'_>,
) -> Result<MtlLoss, MultitaskError> {
    if vars.decoders.len() < 2 {
        return Err(MultitaskError::TooFewDecoders(vars.decoders.len()));
    }
    let (d1, dc) = (&vars.decoders[0], &vars.decoders[1]);
    let mem1 = AttentionMemory::new(tape, d1, nu)?;
    let memc = AttentionMemory::new(tape, dc, nu)?;

    let p1 = teacher_force(tape, d1, &mem1, x1, dropout)?;
    check_normalized(tape, &p1, 0)?;
    let pc = teacher_force(tape, dc, &memc, xc, dropout)?;
    check_normalized(tape, &pc, 1)?;
    let pc_on_x1 = teacher_force(tape, dc, &memc, x1, dropout)?;
    check_normalized(tape, &pc_on_x1, 1)?;

    let ce_reference = cross_entropy(tape, &p1, x1)?;
    let ce_complement = cross_entropy(tape, &pc, xc)?;

    let mut gaps = Vec::with_capacity(p1.len());
    for (i, (&a, &b)) in p1.iter().zip(&pc_on_x1).enumerate() {
        let pa = tape.pick(a, x1[i + 1])?;
        let pb = tape.pick(b, x1[i + 1])?;
        let diff = tape.sub(pa, pb)?;
        gaps.push(tape.abs(diff));
    }
    let agreement = tape.add_all(&gaps)?;

    let ce = tape.add(ce_reference, ce_complement)?;
    let weighted = tape.scale(agreement, eta);
    let inner = tape.add(ce, weighted)?;
    let total = tape.scale(inner, lambda);

    let breakdown = LossBreakdown {
        ce_reference: tape.scalar(ce_reference),
        ce_complement: tape.scalar(ce_complement),
        agreement: tape.scalar(agreement),
        eta,
        lambda,
        total: tape.scalar(total),
    };
    Ok(MtlLoss {
        total,
        ce_reference,
        ce_complement,
        agreement,
        breakdown,
    })
}

/// Arithmetic mean of per-task distributions at one step.
pub fn centroid_prob(dists: &[&[f64]]) -> Result<Vec<f64>, MultitaskError> {
    let first = dists.first().ok_or(MultitaskError::NoDistributions)?;
    let dim = first.len();
    let mut out = vec![0.0; dim];
    for (index, d) in dists.iter().enumerate() {
        if d.len() != dim {
            return Err(MultitaskError::DimensionMismatch {
                index,
                expected: dim,
                actual: d.len(),
            });
        }
        for (o, v) in out.iter_mut().zip(d.iter()) {
            *o += v;
        }
    }
    let n = dists.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_defaults_and_override() {
        let p = EtaPolicy::default();
        assert_eq!(p.eta_for(DatasetKind::Single), 0.0);
        assert_eq!(p.eta_for(DatasetKind::Multi), 1.0);
        assert_eq!(p.eta_for_name("multi").unwrap(), 1.0);
        assert!(matches!(p.eta_for_name("both"), Err(MultitaskError::UnknownKind(_))));
        let o = EtaPolicy::with_override(0.5).unwrap();
        assert_eq!(o.eta_for(DatasetKind::Single), 0.5);
        assert_eq!(o.eta_for(DatasetKind::Multi), 0.5);
        assert!(EtaPolicy::with_override(1.5).is_err());
    }

    #[test]
    fn centroid_cases() {
        let a = [0.2, 0.3, 0.5];
        assert_eq!(centroid_prob(&[&a, &a]).unwrap(), a.to_vec());
        assert_eq!(centroid_prob(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(
            centroid_prob(&[&[1.0, 0.0], &[1.0]]),
            Err(MultitaskError::DimensionMismatch { index: 1, .. })
        ));
        assert!(centroid_prob(&[]).is_err());
    }
}
