use rand::Rng;

use super::MultitaskError;
use crate::model::{infer, DecoderParams, DecoderVars, EncoderParams, EncoderVars, InferOptions, ModelConfig, ModelError};
use crate::numerics::{Tape, Tensor, Var};

/// The shared encoder and its `n` decoders (task 0 is the reference task and
/// task 1 the complement task).
#[derive(Clone, Debug, PartialEq)]
pub struct TaskSet {
    pub config: ModelConfig,
    pub encoder: EncoderParams,
    pub decoders: Vec<DecoderParams>,
}

impl TaskSet {
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, n_decoders: usize, rng: &mut R) -> Result<Self, MultitaskError> {
        config.validate()?;
        if n_decoders < 2 {
            return Err(MultitaskError::TooFewDecoders(n_decoders));
        }
        let encoder = EncoderParams::init(&config, rng);
        let decoders = (0..n_decoders).map(|_| DecoderParams::init(&config, rng)).collect();
        Ok(Self {
            config,
            encoder,
            decoders,
        })
    }

    /// All-zero parameters, used as a shape template.
    pub fn zeros(config: ModelConfig, n_decoders: usize) -> Result<Self, MultitaskError> {
        config.validate()?;
        if n_decoders < 2 {
            return Err(MultitaskError::TooFewDecoders(n_decoders));
        }
        Ok(Self {
            encoder: EncoderParams::zeros(&config),
            decoders: (0..n_decoders).map(|_| DecoderParams::zeros(&config)).collect(),
            config,
        })
    }

    /// Every parameter with its qualified name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> =
            self.encoder.named().into_iter().map(|(n, t)| (format!("encoder.{n}"), t)).collect();
        for (k, d) in self.decoders.iter().enumerate() {
            out.extend(d.named().into_iter().map(|(n, t)| (format!("decoder{k}.{n}"), t)));
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = self
            .encoder
            .named_mut()
            .into_iter()
            .map(|(n, t)| (format!("encoder.{n}"), t))
            .collect();
        for (k, d) in self.decoders.iter_mut().enumerate() {
            out.extend(d.named_mut().into_iter().map(|(n, t)| (format!("decoder{k}.{n}"), t)));
        }
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.named_mut().into_iter().map(|(_, t)| t).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> TaskVars {
        TaskVars {
            encoder: self.encoder.bind(tape, trainable),
            decoders: self.decoders.iter().map(|d| d.bind(tape, trainable)).collect(),
        }
    }

    /// Generates a caption with the configured decoder or the ensemble.
    pub fn infer(&self, frames: &[Vec<f64>], opts: &InferOptions) -> Result<Vec<usize>, ModelError> {
        infer(&self.encoder, &self.decoders, frames, opts)
    }
}

/// Tape handles for a bound [`TaskSet`].
#[derive(Clone, Debug)]
pub struct TaskVars {
    pub encoder: EncoderVars,
    pub decoders: Vec<DecoderVars>,
}

impl TaskVars {
    /// Handles in the same order as [`TaskSet::named`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = self.encoder.vars();
        for d in &self.decoders {
            out.extend(d.vars());
        }
        out
    }

    /// Rebuilds the structured handles from a flat list in
    /// [`TaskSet::named`] order (used by gradient checks).
    pub fn from_flat(template: &TaskSet, flat: &[Var]) -> Self {
        let mut it = flat.iter().copied();
        let mut next = || it.next().expect("flat parameter list too short");
        let lstm = |next: &mut dyn FnMut() -> Var, hidden| crate::model::LstmVars {
            w: next(),
            u: next(),
            b: next(),
            hidden,
        };
        let enc_h = template.config.enc_hidden;
        let encoder = EncoderVars {
            proj: next(),
            forward: lstm(&mut next, enc_h),
            backward: lstm(&mut next, enc_h),
        };
        let decoders = template
            .decoders
            .iter()
            .map(|d| DecoderVars {
                embedding: next(),
                cell: lstm(&mut next, template.config.dec_hidden),
                context: next(),
                attn_v: next(),
                attn_w: next(),
                attn_u: next(),
                out_w: next(),
                out_b: next(),
                vocab_size: d.vocab_size(),
            })
            .collect();
        Self { encoder, decoders }
    }
}
