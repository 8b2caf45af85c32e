use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{load_features, tokenize, DataError, Frames, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(DataError::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

/// Whether videos carry one caption each or several.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Single,
    Multi,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Single => "single",
            DatasetKind::Multi => "multi",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(DatasetKind::Single),
            "multi" => Ok(DatasetKind::Multi),
            other => Err(DataError::InvalidArgument(format!("unknown dataset kind {other:?}"))),
        }
    }
}

/// One line of the captions JSON Lines file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptionRecord {
    pub video_id: String,
    pub caption: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Feature file, relative to the manifest's directory unless absolute.
    pub features: String,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub videos: Vec<ManifestEntry>,
    /// Captions file, relative to the manifest's directory unless absolute.
    pub captions: String,
    pub kind: DatasetKind,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DataError::json(path, 0, e))
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| DataError::io(path, e))
    }
}

/// A caption as written plus its tokenization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Caption {
    pub text: String,
    pub tokens: Vec<String>,
}

impl Caption {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Self { text, tokens }
    }

    /// A caption assembled from tokens; its text is the space-joined tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        Self {
            text: tokens.join(" "),
            tokens,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoSample {
    pub video_id: String,
    pub frames: Frames,
    pub captions: Vec<Caption>,
    pub split: Split,
}

impl VideoSample {
    pub fn feature_dim(&self) -> usize {
        self.frames[0].len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub videos: Vec<VideoSample>,
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_captions(path: &Path) -> Result<Vec<CaptionRecord>, DataError> {
    read_jsonl(path)
}

pub fn write_captions(path: &Path, records: &[CaptionRecord]) -> Result<(), DataError> {
    write_jsonl(path, records)
}

/// Parses a JSON Lines file, skipping blank lines.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| DataError::json(path, i + 1, e)))
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), DataError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| DataError::io(path, e))
}

impl Dataset {
    /// Loads the manifest, its captions file and every feature file.
    pub fn load(manifest_path: &Path) -> Result<Self, DataError> {
        let manifest = DatasetManifest::load(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let records = read_captions(&resolve(base, &manifest.captions))?;

        let mut by_video: BTreeMap<&str, Vec<&CaptionRecord>> = BTreeMap::new();
        for r in &records {
            by_video.entry(r.video_id.as_str()).or_default().push(r);
        }
        let mut seen = BTreeSet::new();
        let mut videos = Vec::with_capacity(manifest.videos.len());
        let mut dim = None;
        for entry in &manifest.videos {
            if !seen.insert(entry.id.as_str()) {
                return Err(DataError::Manifest(format!("video {:?} listed twice", entry.id)));
            }
            let caps = by_video
                .get(entry.id.as_str())
                .ok_or_else(|| DataError::Manifest(format!("video {:?} has no captions", entry.id)))?;
            let mut captions = Vec::with_capacity(caps.len());
            for r in caps {
                if r.split != entry.split {
                    return Err(DataError::Manifest(format!(
                        "caption split {} disagrees with manifest split {} for video {:?}",
                        r.split, entry.split, entry.id
                    )));
                }
                let c = Caption::new(r.caption.clone());
                if c.tokens.is_empty() {
                    return Err(DataError::EmptyCaption(entry.id.clone()));
                }
                captions.push(c);
            }
            let frames = load_features(&resolve(base, &entry.features))?;
            let d = frames[0].len();
            match dim {
                None => dim = Some(d),
                Some(expected) if expected != d => {
                    return Err(DataError::Manifest(format!(
                        "video {:?} has feature dimension {d}, expected {expected}",
                        entry.id
                    )))
                }
                _ => {}
            }
            videos.push(VideoSample {
                video_id: entry.id.clone(),
                frames,
                captions,
                split: entry.split,
            });
        }
        if let Some(extra) = by_video.keys().find(|id| !seen.contains(*id)) {
            return Err(DataError::Manifest(format!("captions reference unknown video {extra:?}")));
        }
        Ok(Self {
            kind: manifest.kind,
            videos,
        })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &VideoSample> {
        self.videos.iter().filter(move |v| v.split == split)
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.videos.first().map(VideoSample::feature_dim)
    }

    /// Vocabulary over the training captions.
    pub fn build_vocab(&self, min_count: usize) -> Result<Vocabulary, DataError> {
        Vocabulary::build(
            self.split(Split::Train)
                .flat_map(|v| v.captions.iter().map(|c| c.tokens.as_slice())),
            min_count,
        )
    }
}
