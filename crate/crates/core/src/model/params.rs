use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::numerics::{Tape, Tensor, Var};

/// Half-width of the uniform weight initialization.
pub const INIT_RANGE: f64 = 0.08;
/// Initial forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

/// Gate blocks in stacked LSTM weights, in row order.
pub const GATES: [&str; 4] = ["i", "f", "o", "z"];

/// Dimensions of the encoder and of every decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Input feature size `D`.
    pub feature_dim: usize,
    /// Projected feature size `r`.
    pub proj_dim: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub word_dim: usize,
    pub attn_dim: usize,
    /// Vocabulary size including reserved tokens.
    pub vocab_size: usize,
}

impl ModelConfig {
    /// Size of one encoded timestep, `2·h_e + r`.
    pub fn context_dim(&self) -> usize {
        2 * self.enc_hidden + self.proj_dim
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let dims = [
            ("feature_dim", self.feature_dim),
            ("proj_dim", self.proj_dim),
            ("enc_hidden", self.enc_hidden),
            ("dec_hidden", self.dec_hidden),
            ("word_dim", self.word_dim),
            ("attn_dim", self.attn_dim),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-INIT_RANGE..INIT_RANGE)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

fn gate_bias(hidden: usize) -> Tensor {
    let mut b = Tensor::zeros(&[4 * hidden]);
    b.data_mut()[hidden..2 * hidden].fill(FORGET_BIAS);
    b
}

fn bind(tape: &mut Tape, t: &Tensor, trainable: bool) -> Var {
    if trainable {
        tape.leaf(t.clone())
    } else {
        tape.constant(t.clone())
    }
}

/// One LSTM cell with gate weights stacked in `i, f, o, z` order.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    /// `4h × input`
    pub w: Tensor,
    /// `4h × h`
    pub u: Tensor,
    /// `4h`
    pub b: Tensor,
}

impl LstmParams {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w: uniform(rng, &[4 * hidden, input]),
            u: uniform(rng, &[4 * hidden, hidden]),
            b: gate_bias(hidden),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w: Tensor::zeros(&[4 * hidden, input]),
            u: Tensor::zeros(&[4 * hidden, hidden]),
            b: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.shape()[1]
    }

    fn named(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("w", &self.w), ("u", &self.u), ("b", &self.b)]
    }

    fn named_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![("w", &mut self.w), ("u", &mut self.u), ("b", &mut self.b)]
    }

    fn bind(&self, tape: &mut Tape, trainable: bool) -> LstmVars {
        LstmVars {
            w: bind(tape, &self.w, trainable),
            u: bind(tape, &self.u, trainable),
            b: bind(tape, &self.b, trainable),
            hidden: self.hidden(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w: Var,
    pub u: Var,
    pub b: Var,
    pub hidden: usize,
}

impl LstmVars {
    fn vars(&self) -> [Var; 3] {
        [self.w, self.u, self.b]
    }
}

/// Feature projection `W_s` plus the two directional cells.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    /// `r × D`
    pub proj: Tensor,
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        Self {
            proj: uniform(rng, &[cfg.proj_dim, cfg.feature_dim]),
            forward: LstmParams::init(cfg.proj_dim, cfg.enc_hidden, rng),
            backward: LstmParams::init(cfg.proj_dim, cfg.enc_hidden, rng),
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        Self {
            proj: Tensor::zeros(&[cfg.proj_dim, cfg.feature_dim]),
            forward: LstmParams::zeros(cfg.proj_dim, cfg.enc_hidden),
            backward: LstmParams::zeros(cfg.proj_dim, cfg.enc_hidden),
        }
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("proj".to_owned(), &self.proj)];
        for (dir, cell) in [("forward", &self.forward), ("backward", &self.backward)] {
            out.extend(cell.named().into_iter().map(|(n, t)| (format!("{dir}.{n}"), t)));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![("proj".to_owned(), &mut self.proj)];
        for (dir, cell) in [("forward", &mut self.forward), ("backward", &mut self.backward)] {
            out.extend(cell.named_mut().into_iter().map(|(n, t)| (format!("{dir}.{n}"), t)));
        }
        out
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> EncoderVars {
        EncoderVars {
            proj: bind(tape, &self.proj, trainable),
            forward: self.forward.bind(tape, trainable),
            backward: self.backward.bind(tape, trainable),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    pub proj: Var,
    pub forward: LstmVars,
    pub backward: LstmVars,
}

impl EncoderVars {
    /// Handles in the same order as [`EncoderParams::named`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![self.proj];
        out.extend(self.forward.vars());
        out.extend(self.backward.vars());
        out
    }
}

/// Word embeddings, the attention-conditioned LSTM, additive attention
/// scoring and the output projection of one decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderParams {
    /// `|V| × d_w`
    pub embedding: Tensor,
    /// Stacked `i, f, o, z` gate weights.
    pub cell: LstmParams,
    /// `4h_d × (2h_e + r)`, consumes the attention context.
    pub context: Tensor,
    /// `1 × d_a`
    pub attn_v: Tensor,
    /// `d_a × (2h_e + r)`
    pub attn_w: Tensor,
    /// `d_a × h_d`
    pub attn_u: Tensor,
    /// `|V| × h_d`
    pub out_w: Tensor,
    /// `|V|`
    pub out_b: Tensor,
}

impl DecoderParams {
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let h = cfg.dec_hidden;
        let ctx = cfg.context_dim();
        Self {
            embedding: uniform(rng, &[cfg.vocab_size, cfg.word_dim]),
            cell: LstmParams::init(cfg.word_dim, h, rng),
            context: uniform(rng, &[4 * h, ctx]),
            attn_v: uniform(rng, &[1, cfg.attn_dim]),
            attn_w: uniform(rng, &[cfg.attn_dim, ctx]),
            attn_u: uniform(rng, &[cfg.attn_dim, h]),
            out_w: uniform(rng, &[cfg.vocab_size, h]),
            out_b: Tensor::zeros(&[cfg.vocab_size]),
        }
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        let h = cfg.dec_hidden;
        let ctx = cfg.context_dim();
        Self {
            embedding: Tensor::zeros(&[cfg.vocab_size, cfg.word_dim]),
            cell: LstmParams::zeros(cfg.word_dim, h),
            context: Tensor::zeros(&[4 * h, ctx]),
            attn_v: Tensor::zeros(&[1, cfg.attn_dim]),
            attn_w: Tensor::zeros(&[cfg.attn_dim, ctx]),
            attn_u: Tensor::zeros(&[cfg.attn_dim, h]),
            out_w: Tensor::zeros(&[cfg.vocab_size, h]),
            out_b: Tensor::zeros(&[cfg.vocab_size]),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.shape()[0]
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![("embedding".to_owned(), &self.embedding)];
        out.extend(self.cell.named().into_iter().map(|(n, t)| (n.to_owned(), t)));
        out.extend([
            ("c".to_owned(), &self.context),
            ("attn_v".to_owned(), &self.attn_v),
            ("attn_w".to_owned(), &self.attn_w),
            ("attn_u".to_owned(), &self.attn_u),
            ("out_w".to_owned(), &self.out_w),
            ("out_b".to_owned(), &self.out_b),
        ]);
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![("embedding".to_owned(), &mut self.embedding)];
        out.extend(self.cell.named_mut().into_iter().map(|(n, t)| (n.to_owned(), t)));
        out.extend([
            ("c".to_owned(), &mut self.context),
            ("attn_v".to_owned(), &mut self.attn_v),
            ("attn_w".to_owned(), &mut self.attn_w),
            ("attn_u".to_owned(), &mut self.attn_u),
            ("out_w".to_owned(), &mut self.out_w),
            ("out_b".to_owned(), &mut self.out_b),
        ]);
        out
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> DecoderVars {
        DecoderVars {
            embedding: bind(tape, &self.embedding, trainable),
            cell: self.cell.bind(tape, trainable),
            context: bind(tape, &self.context, trainable),
            attn_v: bind(tape, &self.attn_v, trainable),
            attn_w: bind(tape, &self.attn_w, trainable),
            attn_u: bind(tape, &self.attn_u, trainable),
            out_w: bind(tape, &self.out_w, trainable),
            out_b: bind(tape, &self.out_b, trainable),
            vocab_size: self.vocab_size(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DecoderVars {
    pub embedding: Var,
    pub cell: LstmVars,
    pub context: Var,
    pub attn_v: Var,
    pub attn_w: Var,
    pub attn_u: Var,
    pub out_w: Var,
    pub out_b: Var,
    pub vocab_size: usize,
}

impl DecoderVars {
    /// Handles in the same order as [`DecoderParams::named`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        out.extend(self.cell.vars());
        out.extend([self.context, self.attn_v, self.attn_w, self.attn_u, self.out_w, self.out_b]);
        out
    }
}
