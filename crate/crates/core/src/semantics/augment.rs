use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::SemanticsError;

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// Set of lowercase stop words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StopWordList {
    words: BTreeSet<String>,
}

impl StopWordList {
    /// Parses one token per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_lowercase)
            .collect();
        Self { words }
    }

    pub fn load(path: &Path) -> Result<Self, SemanticsError> {
        let text = fs::read_to_string(path).map_err(|e| SemanticsError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let list = Self::parse(&text);
        if list.is_empty() {
            return Err(SemanticsError::EmptyStopWords(path.to_path_buf()));
        }
        Ok(list)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl Default for StopWordList {
    fn default() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }
}

impl<S: Into<String>> FromIterator<S> for StopWordList {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self {
            words: iter.into_iter().map(|s| s.into().to_lowercase()).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Augmented {
    pub tokens: Vec<String>,
    /// Every token was a stop word, so the caption was returned unchanged.
    pub degenerate: bool,
}

/// Keyword caption: the tokens that are not stop words, in their original
/// order. A caption made only of stop words is returned as is.
pub fn augment(caption: &[String], stopwords: &StopWordList) -> Augmented {
    let kept: Vec<String> = caption.iter().filter(|t| !stopwords.contains(t)).cloned().collect();
    if kept.is_empty() {
        Augmented {
            tokens: caption.to_vec(),
            degenerate: true,
        }
    } else {
        Augmented {
            tokens: kept,
            degenerate: false,
        }
    }
}
