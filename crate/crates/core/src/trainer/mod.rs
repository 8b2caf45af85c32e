//! Seeded training loop, optimizers, gradient clipping, checkpoints and loss logs.

mod checkpoint;
mod config;
mod optim;
mod train;

use std::path::{Path, PathBuf};

pub use checkpoint::{
    load_checkpoint, loss_csv, save_checkpoint, write_loss_csv, Checkpoint, EpochLoss, NamedTensor, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
pub use config::{OptimizerKind, StepUnit, TrainConfig};
pub use optim::{clip_gradients, ClipReport, Optimizer};
pub use train::{train, train_manifest, TrainResources, DECOMPOSITION_TOL};

use crate::dataio::DataError;
use crate::model::ModelError;
use crate::multitask::MultitaskError;
use crate::numerics::NumericsError;
use crate::semantics::SemanticsError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Multitask(#[from] MultitaskError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<TrainError>,
    },
    #[error("malformed checkpoint: {0}")]
    Malformed(#[source] serde_json::Error),
    #[error("checkpoint: {0}")]
    CheckpointFormat(String),
    #[error("checkpoint is missing parameter {0:?}")]
    MissingParameter(String),
    #[error("parameter {name:?} has shape {actual:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("training diverged at epoch {epoch}, video {video_id:?}: loss {value}")]
    Divergence { epoch: usize, video_id: String, value: f64 },
    #[error("loss decomposition off by {gap} at epoch {epoch}, video {video_id:?}")]
    Decomposition { epoch: usize, video_id: String, gap: f64 },
}

impl TrainError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        TrainError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Divergence-type failures, as opposed to bad inputs.
    pub fn is_numeric(&self) -> bool {
        match self {
            TrainError::Divergence { .. } | TrainError::Decomposition { .. } | TrainError::Numerics(_) => true,
            TrainError::InFile { source, .. } => source.is_numeric(),
            TrainError::Model(ModelError::Numerics(_)) => true,
            TrainError::Multitask(
                MultitaskError::NotNormalized { .. }
                | MultitaskError::Numerics(_)
                | MultitaskError::Model(ModelError::Numerics(_)),
            ) => true,
            _ => false,
        }
    }
}
