use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::DataError;

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const PAD: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<bos>", "<eos>", "<pad>", "<unk>"];

/// Lowercases, splits on whitespace and trims ASCII punctuation from both
/// ends of every token. Tokens left empty are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()))
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Token/index bijection with four reserved entries at indices 0..4.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from tokenized captions. Tokens seen at least `min_count` times
    /// are kept, ordered by descending frequency with lexicographic ties.
    pub fn build<'a, I>(captions: I, min_count: usize) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        if min_count == 0 {
            return Err(DataError::InvalidArgument("min_count must be at least 1".into()));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for caption in captions {
            for tok in caption {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(DataError::EmptyCorpus);
        }
        let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
        // BTreeMap iteration is lexicographic, so a stable sort on count keeps ties ordered.
        kept.sort_by(|a, b| b.1.cmp(&a.1));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t.to_owned()))
    }

    /// Rebuilds from the non-reserved tokens in index order.
    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Self, DataError> {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        all.extend(tokens);
        let mut index = HashMap::with_capacity(all.len());
        for (i, t) in all.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(DataError::InvalidArgument(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self { tokens: all, index })
    }

    /// Number of entries including the reserved ones.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    /// Non-reserved tokens in index order.
    pub fn words(&self) -> &[String] {
        &self.tokens[RESERVED.len()..]
    }

    /// `[BOS, idx(x₁), …, idx(xₙ), EOS]` with out-of-vocabulary tokens as UNK.
    pub fn encode(&self, caption: &[String]) -> Vec<usize> {
        let mut out = Vec::with_capacity(caption.len() + 2);
        out.push(BOS);
        out.extend(caption.iter().map(|t| self.index_of(t).unwrap_or(UNK)));
        out.push(EOS);
        out
    }

    /// Tokens for an index sequence, skipping BOS/PAD and stopping at EOS.
    pub fn decode(&self, indices: &[usize]) -> Vec<String> {
        indices
            .iter()
            .copied()
            .filter(|&i| i != BOS && i != PAD)
            .take_while(|&i| i != EOS)
            .map(|i| self.token(i).unwrap_or(RESERVED[UNK]).to_owned())
            .collect()
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = DataError;

    fn try_from(words: Vec<String>) -> Result<Self, Self::Error> {
        Self::from_tokens(words)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.words().to_vec()
    }
}

/// Convenience wrapper matching the operation name used elsewhere.
pub fn encode_caption(caption: &[String], vocab: &Vocabulary) -> Vec<usize> {
    vocab.encode(caption)
}
