//! Token vocabulary with fixed reserved entries.
//!
//! Sentences are stored pre-tokenized: lowercase, punctuation stripped,
//! whitespace split. The four reserved tokens occupy indices 0..=3 in every
//! vocabulary, and unknown tokens map to UNK rather than erroring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const PAD: usize = 2;
pub const UNK: usize = 3;

pub const RESERVED: [&str; 4] = ["<bos>", "<eos>", "<pad>", "<unk>"];

/// Lowercases, strips punctuation and splits on whitespace.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .split_whitespace()
        .filter_map(|w| {
            let t: String = w
                .chars()
                .filter(|c| !c.is_ascii_punctuation())
                .flat_map(|c| c.to_lowercase())
                .collect();
            (!t.is_empty()).then_some(t)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    token_to_idx: BTreeMap<String, usize>,
    #[serde(skip)]
    idx_to_token: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from a token stream; reserved tokens come first,
    /// the rest are sorted for a deterministic layout.
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let mut uniq: Vec<&str> = tokens
            .into_iter()
            .filter(|t| !RESERVED.contains(t))
            .collect();
        uniq.sort_unstable();
        uniq.dedup();

        let mut token_to_idx = BTreeMap::new();
        for (i, t) in RESERVED.iter().enumerate() {
            token_to_idx.insert((*t).to_string(), i);
        }
        for (i, t) in uniq.iter().enumerate() {
            token_to_idx.insert((*t).to_string(), RESERVED.len() + i);
        }
        let mut v = Vocabulary {
            token_to_idx,
            idx_to_token: Vec::new(),
        };
        v.rebuild_inverse();
        v
    }

    fn rebuild_inverse(&mut self) {
        let mut inv = vec![String::new(); self.token_to_idx.len()];
        for (t, &i) in &self.token_to_idx {
            inv[i] = t.clone();
        }
        self.idx_to_token = inv;
    }

    pub fn len(&self) -> usize {
        self.token_to_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_to_idx.is_empty()
    }

    pub fn index_of(&self, token: &str) -> usize {
        self.token_to_idx.get(token).copied().unwrap_or(UNK)
    }

    pub fn token_at(&self, idx: usize) -> &str {
        self.idx_to_token
            .get(idx)
            .map(String::as_str)
            .unwrap_or(RESERVED[UNK])
    }

    /// Encodes tokens; out-of-vocabulary tokens become UNK.
    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_of(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token_at(i).to_string()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.token_to_idx)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let token_to_idx: BTreeMap<String, usize> = serde_json::from_str(json)?;
        let n = token_to_idx.len();
        let mut seen = vec![false; n];
        for (t, &i) in &token_to_idx {
            if i >= n {
                return Err(Error::Config(format!(
                    "vocabulary index {i} out of range for {n} tokens"
                )));
            }
            if seen[i] {
                return Err(Error::Config(format!("duplicate vocabulary index {i}")));
            }
            seen[i] = true;
            if let Some(pos) = RESERVED.iter().position(|r| r == t) {
                if pos != i {
                    return Err(Error::Config(format!(
                        "reserved token {t:?} must sit at index {pos}, found {i}"
                    )));
                }
            }
        }
        for (pos, t) in RESERVED.iter().enumerate() {
            if token_to_idx.get(*t) != Some(&pos) {
                return Err(Error::Config(format!(
                    "vocabulary is missing reserved token {t:?} at index {pos}"
                )));
            }
        }
        let mut v = Vocabulary {
            token_to_idx,
            idx_to_token: Vec::new(),
        };
        v.rebuild_inverse();
        Ok(v)
    }
}
