use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::dataio::{DatasetKind, Vocabulary};
use crate::model::ModelConfig;
use crate::multitask::TaskSet;
use crate::numerics::Tensor;

pub const CHECKPOINT_FORMAT: &str = "mtle-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Mean loss terms over one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochLoss {
    pub epoch: usize,
    pub ce_reference: f64,
    pub ce_complement: f64,
    pub agreement: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: TrainConfig,
    model: ModelConfig,
    kind: DatasetKind,
    vocab: Vocabulary,
    n_decoders: usize,
    epoch: usize,
    loss_log: Vec<EpochLoss>,
    parameters: Vec<NamedTensor>,
}

/// Trained (or freshly initialized) model with everything needed to resume
/// inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub kind: DatasetKind,
    pub vocab: Vocabulary,
    pub epoch: usize,
    pub loss_log: Vec<EpochLoss>,
    pub model: TaskSet,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            model: self.model.config,
            kind: self.kind,
            vocab: self.vocab.clone(),
            n_decoders: self.model.decoders.len(),
            epoch: self.epoch,
            loss_log: self.loss_log.clone(),
            parameters: self
                .model
                .named()
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let file: CheckpointFile = serde_json::from_str(text).map_err(TrainError::Malformed)?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(TrainError::CheckpointFormat(format!(
                "expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        if file.vocab.len() != file.model.vocab_size {
            return Err(TrainError::CheckpointFormat(format!(
                "vocabulary has {} entries but the model expects {}",
                file.vocab.len(),
                file.model.vocab_size
            )));
        }
        let mut model = TaskSet::zeros(file.model, file.n_decoders)?;
        let mut stored = file.parameters.into_iter();
        for (name, slot) in model.named_mut() {
            let entry = stored.next().ok_or_else(|| TrainError::MissingParameter(name.clone()))?;
            if entry.name != name {
                return Err(TrainError::CheckpointFormat(format!(
                    "expected parameter {name:?}, found {:?}",
                    entry.name
                )));
            }
            if entry.shape != slot.shape() {
                return Err(TrainError::ShapeMismatch {
                    name,
                    expected: slot.shape().to_vec(),
                    actual: entry.shape,
                });
            }
            *slot = Tensor::new(entry.shape, entry.values).map_err(|e| TrainError::CheckpointFormat(format!("{name}: {e}")))?;
        }
        if let Some(extra) = stored.next() {
            return Err(TrainError::CheckpointFormat(format!("unexpected parameter {:?}", extra.name)));
        }
        Ok(Self {
            config: file.config,
            kind: file.kind,
            vocab: file.vocab,
            epoch: file.epoch,
            loss_log: file.loss_log,
            model,
        })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), TrainError> {
    fs::write(path, checkpoint.to_json()).map_err(|e| TrainError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let text = fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
    Checkpoint::from_json(&text).map_err(|e| TrainError::InFile {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

/// `epoch,ce_reference,ce_complement,agreement,total` with one row per epoch.
pub fn loss_csv(log: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,ce_reference,ce_complement,agreement,total\n");
    for e in log {
        out.push_str(&format!(
            "{},{:?},{:?},{:?},{:?}\n",
            e.epoch, e.ce_reference, e.ce_complement, e.agreement, e.total
        ));
    }
    out
}

pub fn write_loss_csv(path: &Path, log: &[EpochLoss]) -> Result<(), TrainError> {
    fs::write(path, loss_csv(log)).map_err(|e| TrainError::io(path, e))
}
