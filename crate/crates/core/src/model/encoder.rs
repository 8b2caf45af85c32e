use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{EncoderVars, LstmVars, ModelError};
use crate::numerics::{Tape, Tensor, Var};

/// Inverted dropout on non-recurrent connections. A rate of zero (or no
/// generator) is the identity and draws no random numbers.
pub struct Dropout<'a> {
    rate: f64,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a> Dropout<'a> {
    pub fn disabled() -> Self {
        Self { rate: 0.0, rng: None }
    }

    pub fn new(rate: f64, rng: &'a mut ChaCha8Rng) -> Self {
        Self { rate, rng: Some(rng) }
    }

    pub fn apply(&mut self, tape: &mut Tape, x: Var) -> Result<Var, ModelError> {
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(x);
        };
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - self.rate;
        let mask: Vec<f64> = (0..tape.value(x).len())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mask = tape.constant(Tensor::new(tape.shape(x).to_vec(), mask)?);
        Ok(tape.hadamard(x, mask)?)
    }
}

/// `v = W_s u`, no bias and no nonlinearity.
pub fn project(tape: &mut Tape, proj: Var, frame: Var) -> Result<Var, ModelError> {
    let d = tape.shape(proj)[1];
    if tape.shape(frame) != [d] {
        return Err(ModelError::FeatureDim {
            expected: d,
            actual: tape.value(frame).len(),
        });
    }
    Ok(tape.matmul(proj, frame)?)
}

/// One LSTM update from stacked pre-activations `[i; f; o; z]`.
pub fn lstm_update(tape: &mut Tape, pre: Var, c_prev: Var, hidden: usize) -> Result<(Var, Var), ModelError> {
    let i = tape.slice(pre, 0, hidden)?;
    let f = tape.slice(pre, hidden, hidden)?;
    let o = tape.slice(pre, 2 * hidden, hidden)?;
    let z = tape.slice(pre, 3 * hidden, hidden)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let o = tape.sigmoid(o);
    let z = tape.tanh(z);
    let iz = tape.hadamard(i, z)?;
    let fc = tape.hadamard(f, c_prev)?;
    let c = tape.add(iz, fc)?;
    let tc = tape.tanh(c);
    let h = tape.hadamard(o, tc)?;
    Ok((h, c))
}

/// Runs one cell over `inputs` in the given order, from zero states.
pub fn run_cell<'i, I>(tape: &mut Tape, cell: &LstmVars, inputs: I) -> Result<Vec<Var>, ModelError>
where
    I: IntoIterator<Item = &'i Var>,
{
    let zeros = Tensor::zeros(&[cell.hidden]);
    let mut h = tape.constant(zeros.clone());
    let mut c = tape.constant(zeros);
    let mut out = Vec::new();
    for &x in inputs {
        let wx = tape.matmul(cell.w, x)?;
        let uh = tape.matmul(cell.u, h)?;
        let pre = tape.add_all(&[wx, uh, cell.b])?;
        (h, c) = lstm_update(tape, pre, c, cell.hidden)?;
        out.push(h);
    }
    Ok(out)
}

/// Per-timestep encodings `νᵗ = [h→ᵗ; h←ᵗ; vᵗ]`.
#[derive(Clone, Debug)]
pub struct EncodedVideo {
    pub steps: Vec<Var>,
    pub forward: Vec<Var>,
    /// Backward-cell states indexed by timestep (so `backward[0]` has seen
    /// the whole sequence).
    pub backward: Vec<Var>,
    pub projected: Vec<Var>,
}

impl EncodedVideo {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn values(&self, tape: &Tape) -> Vec<Vec<f64>> {
        self.steps.iter().map(|&s| tape.value(s).data().to_vec()).collect()
    }
}

/// Projects every frame, runs the forward cell left to right and the backward
/// cell right to left, and concatenates per timestep.
pub fn encode(
    tape: &mut Tape,
    enc: &EncoderVars,
    frames: &[Vec<f64>],
    dropout: &mut Dropout<'_>,
) -> Result<EncodedVideo, ModelError> {
    if frames.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    let mut projected = Vec::with_capacity(frames.len());
    for f in frames {
        let u = tape.constant(Tensor::vector(f.clone()));
        projected.push(project(tape, enc.proj, u)?);
    }
    let inputs = projected
        .iter()
        .map(|&v| dropout.apply(tape, v))
        .collect::<Result<Vec<_>, _>>()?;
    let forward = run_cell(tape, &enc.forward, inputs.iter())?;
    let mut backward = run_cell(tape, &enc.backward, inputs.iter().rev())?;
    backward.reverse();
    let steps = (0..frames.len())
        .map(|t| tape.concat(&[forward[t], backward[t], projected[t]]))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EncodedVideo {
        steps,
        forward,
        backward,
        projected,
    })
}
