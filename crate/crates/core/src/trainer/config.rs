use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::model::ModelConfig;
use crate::semantics::PairSampling;

/// What one optimizer step covers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepUnit {
    /// One (reference, complement) pair per step; every caption of every
    /// video is the reference once per epoch, in shuffled order.
    #[default]
    Pair,
    /// One video per step, summing the loss over all of its references.
    Video,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// Hyperparameters and model sizes. The JSON form takes exactly these keys;
/// omitted keys get their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Global L2 norm the gradient is clipped to.
    pub clip_norm: f64,
    pub lambda: f64,
    /// Replaces the kind-based agreement weight when set.
    pub eta: Option<f64>,
    /// Inferred from the data when absent.
    pub feature_dim: Option<usize>,
    pub proj_dim: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub word_dim: usize,
    pub attn_dim: usize,
    pub min_count: usize,
    pub dropout: f64,
    /// Longest caption (in words) used for training and generated at inference.
    pub max_caption_len: usize,
    pub beam_width: usize,
    pub pair_sampling: PairSampling,
    pub step_unit: StepUnit,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            epochs: 50,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            clip_norm: 5.0,
            lambda: 1.0,
            eta: None,
            feature_dim: None,
            proj_dim: 16,
            enc_hidden: 32,
            dec_hidden: 32,
            word_dim: 16,
            attn_dim: 16,
            min_count: 1,
            dropout: 0.0,
            max_caption_len: 20,
            beam_width: 5,
            pair_sampling: PairSampling::Farthest,
            step_unit: StepUnit::Pair,
        }
    }
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
        let config: Self = serde_json::from_str(&text).map_err(|e| TrainError::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        let positive = [
            ("learning_rate", self.learning_rate),
            ("clip_norm", self.clip_norm),
            ("lambda", self.lambda),
            ("adam_epsilon", self.adam_epsilon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if let Some(eta) = self.eta {
            if !(0.0..=1.0).contains(&eta) {
                return bad(format!("eta must lie in [0, 1], got {eta}"));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        let sizes = [
            ("proj_dim", self.proj_dim),
            ("enc_hidden", self.enc_hidden),
            ("dec_hidden", self.dec_hidden),
            ("word_dim", self.word_dim),
            ("attn_dim", self.attn_dim),
            ("min_count", self.min_count),
            ("max_caption_len", self.max_caption_len),
            ("beam_width", self.beam_width),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.feature_dim == Some(0) {
            return bad("feature_dim must be at least 1".into());
        }
        Ok(())
    }

    pub fn model_config(&self, feature_dim: usize, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            feature_dim,
            proj_dim: self.proj_dim,
            enc_hidden: self.enc_hidden,
            dec_hidden: self.dec_hidden,
            word_dim: self.word_dim,
            attn_dim: self.attn_dim,
            vocab_size,
        }
    }
}
