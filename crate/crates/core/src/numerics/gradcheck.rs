//! Central finite-difference gradient checking.

use serde::Serialize;

use super::{NumericsError, Tape, Tensor, Var};

/// Denominator floor for the relative error, per unit of `max(1, |f|)`.
///
/// Central differences lose about `|f|·ε_mach/ε` to rounding, so entries whose
/// true gradient is near zero are judged on absolute error against a floor
/// that scales with the loss.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Number of worst entries kept in a report.
const WORST_KEPT: usize = 8;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckEntry {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub entries_checked: usize,
    pub max_rel_error: f64,
    /// Worst entries, largest relative error first.
    pub worst: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// `|a − n| / max(|a|, |n|, floor·max(1, |loss|))`.
pub fn relative_error(analytic: f64, numeric: f64, loss: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR * loss.abs().max(1.0));
    (analytic - numeric).abs() / scale
}

/// Computes the analytic gradient of `f` via the tape and compares it
/// entry-by-entry with central differences `(f(θ+ε) − f(θ−ε)) / 2ε`.
///
/// `f` receives a fresh tape and one leaf per entry of `params`, and must
/// return a one-element loss.
pub fn grad_check<F, E>(params: &[Tensor], eps: f64, mut f: F) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<NumericsError>,
{
    let analytic = analytic_gradients(params, &mut f)?;
    grad_check_against(params, &analytic, eps, f)
}

/// Analytic gradients of `f` at `params` (zeros where `f` does not depend on
/// a parameter).
pub fn analytic_gradients<F, E>(params: &[Tensor], f: &mut F) -> Result<Vec<Tensor>, E>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<NumericsError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        return Err(NumericsError::NonFinite { context: "loss at base point".into(), value }.into());
    }
    let grads = tape.backward(loss)?;
    Ok(vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.get_or_zeros(v, p.shape()))
        .collect())
}

/// Like [`grad_check`], but compares against caller-supplied gradients.
pub fn grad_check_against<F, E>(
    params: &[Tensor],
    analytic: &[Tensor],
    eps: f64,
    mut f: F,
) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var, E>,
    E: From<NumericsError>,
{
    if !(eps > 0.0) {
        return Err(NumericsError::InvalidArgument(format!("finite-difference step must be positive, got {eps}")).into());
    }
    let mut probe = params.to_vec();
    let eval = |probe: &[Tensor], f: &mut F| -> Result<f64, E> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = probe.iter().map(|p| tape.constant(p.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.scalar(loss))
    };

    let loss = eval(&probe, &mut f)?;
    if !loss.is_finite() {
        return Err(NumericsError::NonFinite { context: "loss at base point".into(), value: loss }.into());
    }
    let mut entries = Vec::new();
    let mut max_rel_error: f64 = 0.0;
    for (pi, param) in params.iter().enumerate() {
        for idx in 0..param.len() {
            let base = param.data()[idx];
            probe[pi].data_mut()[idx] = base + eps;
            let plus = eval(&probe, &mut f)?;
            probe[pi].data_mut()[idx] = base - eps;
            let minus = eval(&probe, &mut f)?;
            probe[pi].data_mut()[idx] = base;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NumericsError::NonFinite {
                    context: format!("perturbed loss at param {pi} entry {idx}"),
                    value: if plus.is_finite() { minus } else { plus },
                }
                .into());
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].data()[idx];
            let rel_error = relative_error(a, numeric, loss);
            max_rel_error = max_rel_error.max(rel_error);
            entries.push(GradCheckEntry {
                param: pi,
                index: idx,
                analytic: a,
                numeric,
                rel_error,
            });
        }
    }
    let entries_checked = entries.len();
    entries.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
    entries.truncate(WORST_KEPT);
    Ok(GradCheckReport {
        entries_checked,
        max_rel_error,
        worst: entries,
    })
}
