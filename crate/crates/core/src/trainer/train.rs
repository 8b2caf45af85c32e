use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{clip_gradients, Checkpoint, EpochLoss, Optimizer, StepUnit, TrainConfig, TrainError};
use crate::dataio::{Dataset, Split, Vocabulary};
use crate::model::{encode, Dropout};
use crate::multitask::{mtl_loss, training_pair_for, EtaPolicy, LossBreakdown, TaskSet};
use crate::numerics::{Tape, Tensor};
use crate::semantics::{build_sdm, EmbeddingMode, SemanticDistanceMatrix, StopWordList};

/// Largest tolerated gap between a step's total and its recomposed terms.
pub const DECOMPOSITION_TOL: f64 = 1e-12;

/// Embedder and stop words used to form training pairs.
#[derive(Clone, Debug, Default)]
pub struct TrainResources {
    pub embedder: EmbeddingMode,
    pub stopwords: StopWordList,
}

fn encode_tokens(vocab: &Vocabulary, tokens: &[String], max_len: usize) -> Vec<usize> {
    vocab.encode(&tokens[..tokens.len().min(max_len)])
}

#[derive(Default)]
struct Accumulator {
    n: usize,
    ce_reference: f64,
    ce_complement: f64,
    agreement: f64,
    total: f64,
}

impl Accumulator {
    fn add(&mut self, b: &LossBreakdown) {
        self.n += 1;
        self.ce_reference += b.ce_reference;
        self.ce_complement += b.ce_complement;
        self.agreement += b.agreement;
        self.total += b.total;
    }

    fn mean(&self, epoch: usize) -> EpochLoss {
        let n = self.n as f64;
        EpochLoss {
            epoch,
            ce_reference: self.ce_reference / n,
            ce_complement: self.ce_complement / n,
            agreement: self.agreement / n,
            total: self.total / n,
        }
    }
}

/// Trains a two-decoder task set on the training split of `dataset`.
pub fn train(dataset: &Dataset, config: &TrainConfig, resources: &TrainResources) -> Result<Checkpoint, TrainError> {
    config.validate()?;
    let videos: Vec<_> = dataset.split(Split::Train).collect();
    if videos.is_empty() {
        return Err(TrainError::Config("dataset has no training videos".into()));
    }
    let vocab = dataset.build_vocab(config.min_count)?;
    let data_dim = dataset.feature_dim().expect("non-empty dataset");
    if let Some(d) = config.feature_dim {
        if d != data_dim {
            return Err(TrainError::Config(format!(
                "config feature_dim {d} does not match data dimension {data_dim}"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed);
    dropout_rng.set_stream(1);

    let mut model = TaskSet::init(config.model_config(data_dim, vocab.len()), 2, &mut rng)?;
    let eta = match config.eta {
        Some(e) => EtaPolicy::with_override(e)?,
        None => EtaPolicy::default(),
    }
    .eta_for(dataset.kind);

    let sdms: Vec<Option<SemanticDistanceMatrix>> = videos
        .iter()
        .map(|v| {
            if v.captions.len() >= 2 {
                build_sdm(&v.video_id, &v.captions, &resources.embedder).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_, _>>()?;

    let mut optimizer = Optimizer::new(config, &model.tensors());
    let mut loss_log = Vec::with_capacity(config.epochs);
    // Each unit is a video and the reference captions its step covers.
    let mut units: Vec<(usize, Vec<usize>)> = match config.step_unit {
        StepUnit::Pair => videos
            .iter()
            .enumerate()
            .flat_map(|(k, v)| (0..v.captions.len()).map(move |r| (k, vec![r])))
            .collect(),
        StepUnit::Video => videos
            .iter()
            .enumerate()
            .map(|(k, v)| (k, (0..v.captions.len()).collect()))
            .collect(),
    };

    for epoch in 1..=config.epochs {
        units.shuffle(&mut rng);
        let mut acc = Accumulator::default();
        for (k, references) in &units {
            let video = videos[*k];
            let diverged = |value: f64| TrainError::Divergence {
                epoch,
                video_id: video.video_id.clone(),
                value,
            };
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape, true);
            let mut dropout = Dropout::new(config.dropout, &mut dropout_rng);
            let nu = encode(&mut tape, &vars.encoder, &video.frames, &mut dropout)?;

            let mut totals = Vec::with_capacity(references.len());
            for &reference in references {
                let pair = training_pair_for(
                    video,
                    reference,
                    sdms[*k].as_ref(),
                    dataset.kind,
                    &resources.stopwords,
                    config.pair_sampling,
                    &mut rng,
                )?;
                let x1 = encode_tokens(&vocab, &pair.reference, config.max_caption_len);
                let xc = encode_tokens(&vocab, &pair.complement, config.max_caption_len);
                let loss = mtl_loss(&mut tape, &vars, &nu, &x1, &xc, eta, config.lambda, &mut dropout)?;
                let b = loss.breakdown;
                if !b.total.is_finite() {
                    return Err(diverged(b.total));
                }
                if b.decomposition_error() > DECOMPOSITION_TOL {
                    return Err(TrainError::Decomposition {
                        epoch,
                        video_id: video.video_id.clone(),
                        gap: b.decomposition_error(),
                    });
                }
                acc.add(&b);
                totals.push(loss.total);
            }
            let step_loss = tape.add_all(&totals)?;

            let grads = tape.backward(step_loss)?;
            let mut grads: Vec<Tensor> = vars
                .vars()
                .into_iter()
                .map(|v| grads.get_or_zeros(v, tape.shape(v)))
                .collect();
            let clip = clip_gradients(&mut grads, config.clip_norm)?;
            if !clip.norm.is_finite() {
                return Err(diverged(clip.norm));
            }
            optimizer.step(&mut model.tensors_mut(), &grads);
        }
        loss_log.push(acc.mean(epoch));
    }

    Ok(Checkpoint {
        config: config.clone(),
        kind: dataset.kind,
        vocab,
        epoch: config.epochs,
        loss_log,
        model,
    })
}

/// Loads the dataset behind `manifest` and trains on it.
pub fn train_manifest(manifest: &Path, config: &TrainConfig, resources: &TrainResources) -> Result<Checkpoint, TrainError> {
    let dataset = Dataset::load(manifest)?;
    train(&dataset, config, resources)
}
