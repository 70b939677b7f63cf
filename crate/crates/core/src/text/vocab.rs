use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{GefError, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Token/id mapping with four reserved entries. Ordinary tokens are ordered
/// by descending frequency, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, usize>,
    min_freq: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    min_freq: usize,
    tokens: Vec<String>,
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        Self {
            min_freq: v.min_freq,
            tokens: v.id_to_token[RESERVED.len()..].to_vec(),
        }
    }
}

impl TryFrom<VocabRepr> for Vocab {
    type Error = GefError;

    fn try_from(r: VocabRepr) -> Result<Self> {
        Vocab::from_tokens(r.tokens, r.min_freq)
    }
}

impl Vocab {
    pub const DEFAULT_MIN_FREQ: usize = 2;

    pub fn build<'a, I, S>(sequences: I, min_freq: usize) -> Self
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let seqs: Vec<&S> = sequences.into_iter().collect();
        for seq in &seqs {
            for tok in seq.as_ref() {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_freq.max(1) && !RESERVED.contains(t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t.to_owned()).collect(), min_freq)
            .expect("counted tokens are unique")
    }

    pub fn from_tokens(tokens: Vec<String>, min_freq: usize) -> Result<Self> {
        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(tokens);
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (i, t) in id_to_token.iter().enumerate() {
            if token_to_id.insert(t.clone(), i).is_some() {
                return Err(GefError::validation(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Self {
            id_to_token,
            token_to_id,
            min_freq,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_freq(&self) -> usize {
        self.min_freq
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        self.id_to_token.get(id).map_or(RESERVED[UNK], String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_owned()).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}
