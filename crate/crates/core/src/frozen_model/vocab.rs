use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const MASK: &str = "[MASK]";
pub const SEP: &str = "[SEP]";

/// Whitespace vocabulary with the four special tokens at fixed ids 0..4 and a
/// frequency table gathered from the pretraining corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRecord", into = "VocabularyRecord")]
pub struct Vocabulary {
    tokens: Vec<String>,
    frequencies: Vec<u64>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRecord {
    tokens: Vec<String>,
    frequencies: Vec<u64>,
}

impl TryFrom<VocabularyRecord> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRecord) -> Result<Self> {
        let mut v = Vocabulary::new(r.tokens.into_iter().skip(4))?;
        v.set_frequencies(r.frequencies)?;
        Ok(v)
    }
}

impl From<Vocabulary> for VocabularyRecord {
    fn from(v: Vocabulary) -> Self {
        VocabularyRecord {
            tokens: v.tokens,
            frequencies: v.frequencies,
        }
    }
}

impl Vocabulary {
    pub const PAD_ID: usize = 0;
    pub const UNK_ID: usize = 1;
    pub const MASK_ID: usize = 2;
    pub const SEP_ID: usize = 3;

    /// Builds a vocabulary from ordinary (non-special) tokens.
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens: Vec<String> = [PAD, UNK, MASK, SEP].iter().map(|s| s.to_string()).collect();
        let mut index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for w in words {
            let w = w.into();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid vocabulary token {w:?}")));
            }
            if index.contains_key(&w) {
                return Err(Error::Config(format!("duplicate vocabulary token {w:?}")));
            }
            index.insert(w.clone(), tokens.len());
            tokens.push(w);
        }
        let frequencies = vec![0; tokens.len()];
        Ok(Self {
            tokens,
            frequencies,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(Self::UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn is_special(id: usize) -> bool {
        id < 4
    }

    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        text.split_whitespace().map(|w| self.id_or_unk(w)).collect()
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.frequencies
    }

    pub fn set_frequencies(&mut self, freq: Vec<u64>) -> Result<()> {
        if freq.len() != self.tokens.len() {
            return Err(Error::shape(
                "Vocabulary::set_frequencies",
                format!("{} tokens", self.tokens.len()),
                format!("{} counts", freq.len()),
            ));
        }
        self.frequencies = freq;
        Ok(())
    }

    /// Counts every token occurrence in `corpus`.
    pub fn count_frequencies<'a, I>(&mut self, corpus: I)
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        self.frequencies.iter_mut().for_each(|f| *f = 0);
        for seq in corpus {
            for &t in seq {
                self.frequencies[t] += 1;
            }
        }
    }

    /// The `n` most frequent non-special tokens; ties broken by lower id.
    pub fn most_frequent(&self, n: usize) -> Vec<usize> {
        let mut ids: Vec<usize> = (4..self.tokens.len()).collect();
        ids.sort_by(|&a, &b| self.frequencies[b].cmp(&self.frequencies[a]).then(a.cmp(&b)));
        ids.truncate(n);
        ids
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_have_fixed_ids() {
        let v = Vocabulary::new(["a", "b"]).unwrap();
        assert_eq!(v.id(PAD), Some(Vocabulary::PAD_ID));
        assert_eq!(v.id(UNK), Some(Vocabulary::UNK_ID));
        assert_eq!(v.id(MASK), Some(Vocabulary::MASK_ID));
        assert_eq!(v.id(SEP), Some(Vocabulary::SEP_ID));
        assert_eq!(v.len(), 6);
        assert_eq!(v.tokenize("a zzz b"), vec![4, Vocabulary::UNK_ID, 5]);
    }

    #[test]
    fn duplicates_and_specials_rejected() {
        assert!(Vocabulary::new(["a", "a"]).is_err());
        assert!(Vocabulary::new(["[MASK]"]).is_err());
        assert!(Vocabulary::new(["two words"]).is_err());
    }

    #[test]
    fn most_frequent_skips_specials() {
        let mut v = Vocabulary::new(["a", "b", "c"]).unwrap();
        let corpus: Vec<Vec<usize>> = vec![vec![0, 0, 0, 6, 6, 5], vec![6, 4]];
        v.count_frequencies(corpus.iter().map(Vec::as_slice));
        assert_eq!(v.most_frequent(2), vec![6, 4]);
    }

    #[test]
    fn serde_round_trip() {
        let mut v = Vocabulary::new(["x", "y"]).unwrap();
        v.set_frequencies(vec![0, 0, 0, 0, 3, 1]).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }
}
