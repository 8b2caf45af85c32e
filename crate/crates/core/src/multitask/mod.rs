//! Shared-encoder multitask training objective: the task set, complement pair
//! sampling, the joint loss with its agreement term, and the centroid.

mod check;
mod loss;
mod pairs;
mod taskset;

pub use check::{loss_gradcheck, GradCheckSetup};
pub use loss::{centroid_prob, mtl_loss, LossBreakdown, MtlLoss, EtaPolicy, NORMALIZATION_TOL};
pub use pairs::{sample_training_pair, training_pair_for, PairSource, TrainingPair};
pub use taskset::{TaskSet, TaskVars};

use crate::model::ModelError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum MultitaskError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("a task set needs at least 2 decoders, got {0}")]
    TooFewDecoders(usize),
    #[error("unknown dataset kind {0:?} (expected single or multi)")]
    UnknownKind(String),
    #[error("eta must lie in [0, 1], got {0}")]
    EtaOutOfRange(f64),
    #[error("decoder {decoder} step {step}: distribution sums to {sum}")]
    NotNormalized { decoder: usize, step: usize, sum: f64 },
    #[error("distribution {index} has length {actual}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, actual: usize },
    #[error("no distributions given")]
    NoDistributions,
    #[error("video {0:?} has no captions")]
    NoCaptions(String),
}
