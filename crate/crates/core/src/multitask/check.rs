use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{mtl_loss, MultitaskError, TaskSet, TaskVars};
use crate::dataio::{BOS, EOS, RESERVED};
use crate::model::{encode, Dropout, ModelConfig};
use crate::numerics::{grad_check, GradCheckReport, Tape, Var};

/// Sizes and seed for [`loss_gradcheck`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckSetup {
    pub model: ModelConfig,
    pub frames: usize,
    /// Words per caption, excluding BOS/EOS.
    pub reference_len: usize,
    pub complement_len: usize,
    pub eta: f64,
    pub lambda: f64,
    /// Half-width of the uniform range parameters are redrawn from.
    pub weight_scale: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for GradCheckSetup {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                feature_dim: 6,
                proj_dim: 4,
                enc_hidden: 5,
                dec_hidden: 5,
                word_dim: 6,
                attn_dim: 4,
                vocab_size: 12,
            },
            frames: 3,
            reference_len: 2,
            complement_len: 2,
            eta: 1.0,
            lambda: 1.0,
            weight_scale: 0.5,
            eps: 1e-5,
            seed: 7,
        }
    }
}

fn random_caption(rng: &mut ChaCha8Rng, words: usize, vocab: usize) -> Vec<usize> {
    let mut out = vec![BOS];
    out.extend((0..words).map(|_| rng.random_range(RESERVED.len()..vocab)));
    out.push(EOS);
    out
}

/// Checks every parameter entry's analytic gradient of the full joint loss
/// against central differences on a random model and example.
pub fn loss_gradcheck(setup: &GradCheckSetup) -> Result<GradCheckReport, MultitaskError> {
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut model = TaskSet::init(setup.model, 2, &mut rng)?;
    for t in model.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-setup.weight_scale..setup.weight_scale);
        }
    }
    let frames: Vec<Vec<f64>> = (0..setup.frames)
        .map(|_| (0..setup.model.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let vocab = setup.model.vocab_size;
    let x1 = random_caption(&mut rng, setup.reference_len, vocab);
    let xc = random_caption(&mut rng, setup.complement_len, vocab);

    let params: Vec<_> = model.tensors().into_iter().cloned().collect();
    grad_check(&params, setup.eps, |tape: &mut Tape, p: &[Var]| {
        let vars = TaskVars::from_flat(&model, p);
        let nu = encode(tape, &vars.encoder, &frames, &mut Dropout::disabled())?;
        let loss = mtl_loss(tape, &vars, &nu, &x1, &xc, setup.eta, setup.lambda, &mut Dropout::disabled())?;
        Ok::<_, MultitaskError>(loss.total)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_setup_passes() {
        let report = loss_gradcheck(&GradCheckSetup::default()).unwrap();
        assert!(report.passed(1e-4), "{report:?}");
    }
}
