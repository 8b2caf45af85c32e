//! Shared bi-directional encoder, attention decoder and caption inference.

mod decoder;
mod encoder;
mod infer;
mod params;

pub use decoder::{attend, decode_step, output_dist, output_logits, teacher_force, Attention, AttentionMemory, DecoderState};
pub use encoder::{encode, lstm_update, project, run_cell, Dropout, EncodedVideo};
pub use infer::{argmax, infer, mean_distribution, DecodeMode, InferOptions};
pub use params::{
    DecoderParams, DecoderVars, EncoderParams, EncoderVars, LstmParams, LstmVars, ModelConfig, FORGET_BIAS, GATES,
    INIT_RANGE,
};

use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("frame feature dimension {actual} does not match projection input {expected}")]
    FeatureDim { expected: usize, actual: usize },
    #[error("empty frame sequence")]
    EmptySequence,
    #[error("caption must contain at least BOS and one target token")]
    EmptyCaption,
    #[error("token index {token} outside vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: usize, vocab_size: usize },
    #[error("unknown decoding mode {0:?}")]
    UnknownMode(String),
    #[error("decoder {index} requested but the model has {count}")]
    NoSuchDecoder { index: usize, count: usize },
    #[error("invalid model configuration: {0}")]
    Config(String),
}
