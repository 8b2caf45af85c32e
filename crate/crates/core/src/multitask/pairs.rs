use rand::Rng;

use super::MultitaskError;
use crate::dataio::{DatasetKind, VideoSample};
use crate::semantics::{augment, PairSampling, SemanticDistanceMatrix, StopWordList};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairSource {
    /// The complement is another caption of the same video.
    Complement,
    /// The complement is the keyword form of the reference.
    Augmented,
    /// The reference was all stop words and is used for both tasks.
    Degenerate,
}

/// Reference and complement token sequences for one training step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingPair {
    pub reference: Vec<String>,
    pub complement: Vec<String>,
    pub reference_index: usize,
    pub complement_index: Option<usize>,
    pub source: PairSource,
}

/// Multi-caption videos draw a reference uniformly and take its complement
/// from the matrix; otherwise the complement is the augmented reference.
pub fn sample_training_pair<R: Rng + ?Sized>(
    video: &VideoSample,
    sdm: Option<&SemanticDistanceMatrix>,
    kind: DatasetKind,
    stopwords: &StopWordList,
    sampling: PairSampling,
    rng: &mut R,
) -> Result<TrainingPair, MultitaskError> {
    let n = video.captions.len();
    if n == 0 {
        return Err(MultitaskError::NoCaptions(video.video_id.clone()));
    }
    let reference = if n > 1 { rng.random_range(0..n) } else { 0 };
    training_pair_for(video, reference, sdm, kind, stopwords, sampling, rng)
}

/// Pair for a given reference caption index.
pub fn training_pair_for<R: Rng + ?Sized>(
    video: &VideoSample,
    reference: usize,
    sdm: Option<&SemanticDistanceMatrix>,
    kind: DatasetKind,
    stopwords: &StopWordList,
    sampling: PairSampling,
    rng: &mut R,
) -> Result<TrainingPair, MultitaskError> {
    let caption = video
        .captions
        .get(reference)
        .ok_or_else(|| MultitaskError::NoCaptions(video.video_id.clone()))?;
    if kind == DatasetKind::Multi {
        if let Some(c) = sdm.filter(|m| m.n >= 2).and_then(|m| m.complement_of(reference, sampling, rng)) {
            return Ok(TrainingPair {
                reference: caption.tokens.clone(),
                complement: video.captions[c].tokens.clone(),
                reference_index: reference,
                complement_index: Some(c),
                source: PairSource::Complement,
            });
        }
    }
    let aug = augment(&caption.tokens, stopwords);
    Ok(TrainingPair {
        reference: caption.tokens.clone(),
        complement: aug.tokens,
        reference_index: reference,
        complement_index: None,
        source: if aug.degenerate {
            PairSource::Degenerate
        } else {
            PairSource::Augmented
        },
    })
}
