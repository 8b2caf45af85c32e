//! Deterministic synthetic captioning datasets.
//!
//! Every video shows a latent (subject, action, object) event sequence. Each
//! event has a fixed unit-norm basis vector; frames are the basis vector of the
//! event on screen plus Gaussian noise. Captions fill fixed templates with the
//! event words, one template per caption variant.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{write_captions, write_features, CaptionRecord, DataError, DatasetKind, DatasetManifest, ManifestEntry, Split};

pub const FEATURE_NOISE_STD: f64 = 0.05;

const SUBJECTS: [&str; 12] = [
    "man", "woman", "dog", "cat", "boy", "girl", "chef", "horse", "child", "player", "monkey", "bird",
];
const ACTIONS: [&str; 12] = [
    "running", "playing", "cutting", "riding", "eating", "slicing", "jumping", "pouring", "throwing", "holding",
    "climbing", "washing",
];
const OBJECTS: [&str; 12] = [
    "guitar", "ball", "onion", "bicycle", "bread", "tomato", "car", "water", "piano", "rope", "tree", "dish",
];

#[derive(Clone, Copy)]
enum Slot {
    Word(&'static str),
    Subject,
    Action,
    Object,
}

use Slot::{Action as A, Object as O, Subject as S, Word as W};

const TEMPLATES: [&[Slot]; 6] = [
    &[W("a"), S, W("is"), A, W("a"), O],
    &[W("the"), S, A, W("the"), O],
    &[S, A, O, W("now")],
    &[W("someone"), W("sees"), S, A, O],
    &[W("there"), W("is"), W("a"), S, A, W("with"), O],
    &[O, W("and"), S, A],
];

pub const MAX_CAPTIONS_PER_VIDEO: usize = TEMPLATES.len();

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_videos: usize,
    /// Distinct caption words the generator may use (function plus content words).
    pub vocab_size: usize,
    pub frames_per_video: usize,
    pub feature_dim: usize,
    pub captions_per_video: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            n_videos: 8,
            vocab_size: 20,
            frames_per_video: 6,
            feature_dim: 16,
            captions_per_video: 2,
        }
    }
}

fn function_words(templates: &[&[Slot]]) -> Vec<&'static str> {
    let mut words = Vec::new();
    for t in templates {
        for slot in t.iter() {
            if let W(w) = slot {
                if !words.contains(w) {
                    words.push(*w);
                }
            }
        }
    }
    words
}

fn content_word(pool: &[&str], i: usize, prefix: &str) -> String {
    match pool.get(i) {
        Some(w) => (*w).to_owned(),
        None => format!("{prefix}{i}"),
    }
}

/// The generated dataset in memory, before it is written out.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub kind: DatasetKind,
    pub videos: Vec<SynthVideo>,
}

#[derive(Clone, Debug)]
pub struct SynthVideo {
    pub id: String,
    pub frames: Vec<Vec<f64>>,
    pub captions: Vec<String>,
}

impl SynthConfig {
    fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidArgument(msg));
        if self.n_videos == 0 || self.frames_per_video == 0 || self.feature_dim == 0 || self.captions_per_video == 0 {
            return bad("synthetic dataset counts must all be at least 1".into());
        }
        if self.vocab_size < 8 {
            return bad(format!("vocab_size must be at least 8, got {}", self.vocab_size));
        }
        if self.captions_per_video > MAX_CAPTIONS_PER_VIDEO {
            return bad(format!(
                "at most {MAX_CAPTIONS_PER_VIDEO} captions per video are supported, got {}",
                self.captions_per_video
            ));
        }
        let fixed = function_words(&TEMPLATES[..self.captions_per_video]).len();
        if self.vocab_size < fixed + 3 {
            return bad(format!(
                "vocab_size {} leaves fewer than 3 content words after {fixed} template words",
                self.vocab_size
            ));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<SynthData, DataError> {
        self.validate()?;
        let templates = &TEMPLATES[..self.captions_per_video];
        let content = self.vocab_size - function_words(templates).len();
        let (mut subjects, mut actions, mut objects) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..content {
            match i % 3 {
                0 => subjects.push(content_word(&SUBJECTS, subjects.len(), "subject")),
                1 => actions.push(content_word(&ACTIONS, actions.len(), "action")),
                _ => objects.push(content_word(&OBJECTS, objects.len(), "object")),
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let basis = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut v: Vec<f64> = (0..self.feature_dim).map(|_| unit.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.iter_mut().for_each(|x| *x /= norm);
            v
        };
        let subject_basis: Vec<Vec<f64>> = subjects.iter().map(|_| basis(&mut rng)).collect();
        let action_basis: Vec<Vec<f64>> = actions.iter().map(|_| basis(&mut rng)).collect();
        let object_basis: Vec<Vec<f64>> = objects.iter().map(|_| basis(&mut rng)).collect();
        let noise = Normal::new(0.0, FEATURE_NOISE_STD).expect("valid normal");

        let mut videos = Vec::with_capacity(self.n_videos);
        for v in 0..self.n_videos {
            let s = rng.random_range(0..subjects.len());
            let a = rng.random_range(0..actions.len());
            let o = rng.random_range(0..objects.len());
            let events = [&subject_basis[s], &action_basis[a], &object_basis[o]];
            let t = self.frames_per_video;
            let frames = (0..t)
                .map(|j| {
                    let event = ((j * events.len()) / t).min(events.len() - 1);
                    events[event].iter().map(|x| x + noise.sample(&mut rng)).collect()
                })
                .collect();
            let captions = templates
                .iter()
                .map(|tpl| {
                    tpl.iter()
                        .map(|slot| match slot {
                            W(w) => *w,
                            S => subjects[s].as_str(),
                            A => actions[a].as_str(),
                            O => objects[o].as_str(),
                        })
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            videos.push(SynthVideo {
                id: format!("vid{v:03}"),
                frames,
                captions,
            });
        }
        let kind = if self.captions_per_video == 1 {
            DatasetKind::Single
        } else {
            DatasetKind::Multi
        };
        Ok(SynthData { kind, videos })
    }
}

/// Writes `manifest.json`, `captions.jsonl` and `features/<id>.mtlf` under
/// `out_dir`, returning the manifest path.
pub fn synth_dataset(config: &SynthConfig, out_dir: &Path) -> Result<(PathBuf, DatasetManifest), DataError> {
    let data = config.generate()?;
    let feat_dir = out_dir.join("features");
    fs::create_dir_all(&feat_dir).map_err(|e| DataError::io(&feat_dir, e))?;

    let mut entries = Vec::with_capacity(data.videos.len());
    let mut records = Vec::new();
    for video in &data.videos {
        let rel = format!("features/{}.mtlf", video.id);
        write_features(&out_dir.join(&rel), &video.frames)?;
        entries.push(ManifestEntry {
            id: video.id.clone(),
            features: rel,
            split: Split::Train,
        });
        records.extend(video.captions.iter().map(|c| CaptionRecord {
            video_id: video.id.clone(),
            caption: c.clone(),
            split: Split::Train,
        }));
    }
    write_captions(&out_dir.join("captions.jsonl"), &records)?;
    let manifest = DatasetManifest {
        videos: entries,
        captions: "captions.jsonl".into(),
        kind: data.kind,
    };
    let path = out_dir.join("manifest.json");
    manifest.save(&path)?;
    Ok((path, manifest))
}
