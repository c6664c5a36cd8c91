//! Conversation corpora, JSONL ingestion and strict k-shot sampling.
//!
//! A few-shot example keeps the whole conversation but retains exactly one
//! gold label, the one of a randomly chosen target utterance. Each
//! conversation contributes at most one example per split, and the test split
//! is never subsampled.

mod jsonl;
mod sampling;
pub mod synthetic;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frozen_model::Vocabulary;
use crate::pipeline::Metric;

pub use jsonl::{load_jsonl, write_jsonl};
pub use sampling::{sample_few_shot, FewShotSplit};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: String,
    pub text: String,
    pub emotion: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

impl Conversation {
    /// Token ids of utterances `0..=target`, each led by its speaker tag.
    pub fn context_tokens(&self, target: usize, vocab: &Vocabulary) -> Vec<Vec<usize>> {
        self.utterances[..=target]
            .iter()
            .map(|u| {
                let mut ids = Vec::with_capacity(1 + u.text.len() / 4);
                ids.push(vocab.id_or_unk(&u.speaker));
                ids.extend(vocab.tokenize(&u.text));
                ids
            })
            .collect()
    }
}

/// One conversation with a single retained label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub conversation: Conversation,
    pub target: usize,
    pub label: String,
}

impl FewShotExample {
    pub fn key(&self) -> (&str, usize) {
        (&self.conversation.id, self.target)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub task_id: String,
    pub labels: Vec<String>,
    pub neutral: Option<String>,
    pub train: Vec<Conversation>,
    pub dev: Vec<Conversation>,
    pub test: Vec<Conversation>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub conversations: usize,
    pub utterances: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub train: SplitCounts,
    pub dev: SplitCounts,
    pub test: SplitCounts,
}

fn count(split: &[Conversation]) -> SplitCounts {
    SplitCounts {
        conversations: split.len(),
        utterances: split.iter().map(|c| c.utterances.len()).sum(),
    }
}

/// Conversation and utterance counts per split.
pub fn stats(ds: &TaskDataset) -> DatasetStats {
    DatasetStats {
        train: count(&ds.train),
        dev: count(&ds.dev),
        test: count(&ds.test),
    }
}

impl TaskDataset {
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Every (conversation, utterance) of the test split, in file order.
    pub fn test_items(&self) -> impl Iterator<Item = (&Conversation, usize)> {
        self.test.iter().flat_map(|c| (0..c.utterances.len()).map(move |j| (c, j)))
    }

    pub fn load(config: &TaskConfig) -> Result<Self> {
        let labels = &config.labels;
        let ds = TaskDataset {
            task_id: config.id.clone(),
            labels: labels.clone(),
            neutral: config.neutral.clone(),
            train: load_jsonl(&config.train, Some(labels))?,
            dev: match &config.dev {
                Some(p) => load_jsonl(p, Some(labels))?,
                None => Vec::new(),
            },
            test: load_jsonl(&config.test, Some(labels))?,
        };
        Ok(ds)
    }

    /// Labels actually used in any split, in first-seen order.
    pub fn observed_labels(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in self.train.iter().chain(&self.dev).chain(&self.test) {
            for u in &c.utterances {
                if seen.insert(u.emotion.clone()) {
                    out.push(u.emotion.clone());
                }
            }
        }
        out
    }

    /// Order-independent digest of the test split.
    pub fn test_checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for c in &self.test {
            h.update(serde_json::to_vec(c).expect("conversation serializes"));
        }
        hex::encode(h.finalize())
    }
}

/// Per-task configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub id: String,
    pub labels: Vec<String>,
    #[serde(default)]
    pub neutral: Option<String>,
    pub metric: Metric,
    pub train: PathBuf,
    #[serde(default)]
    pub dev: Option<PathBuf>,
    pub test: PathBuf,
}

impl TaskConfig {
    /// Reads a TOML task config; data paths are resolved relative to the file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: TaskConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.train = base.join(&cfg.train);
        cfg.dev = cfg.dev.map(|p| base.join(p));
        cfg.test = base.join(&cfg.test);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(Error::Config(format!("task {} declares no labels", self.id)));
        }
        let unique: BTreeSet<_> = self.labels.iter().collect();
        if unique.len() != self.labels.len() {
            return Err(Error::Config(format!("task {} has duplicate labels", self.id)));
        }
        if let Some(n) = &self.neutral {
            if !self.labels.contains(n) {
                return Err(Error::Config(format!(
                    "task {}: neutral label {n:?} is not in the label set",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_dataset(convs: usize, utts: usize, labels: &[&str]) -> TaskDataset {
        let mk = |prefix: &str, n: usize| -> Vec<Conversation> {
            (0..n)
                .map(|i| Conversation {
                    id: format!("{prefix}{i}"),
                    utterances: (0..utts)
                        .map(|j| Utterance {
                            speaker: if j % 2 == 0 { "spk_a" } else { "spk_b" }.into(),
                            text: format!("w{i} w{j}"),
                            emotion: labels[(i + j) % labels.len()].to_string(),
                        })
                        .collect(),
                })
                .collect()
        };
        TaskDataset {
            task_id: "toy".into(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
            neutral: None,
            train: mk("tr", convs),
            dev: mk("dv", convs / 2),
            test: mk("te", convs),
        }
    }

    #[test]
    fn stats_counts_conversations_and_utterances() {
        let ds = toy_dataset(10, 5, &["a", "b"]);
        let s = stats(&ds);
        assert_eq!(
            s.train,
            SplitCounts {
                conversations: 10,
                utterances: 50
            }
        );
        assert_eq!(s.dev.conversations, 5);
        assert_eq!(stats(&ds.clone()), s);
    }

    #[test]
    fn context_tokens_stop_at_target() {
        let vocab = Vocabulary::new(["spk_a", "spk_b", "w0", "w1", "w2"]).unwrap();
        let ds = toy_dataset(1, 3, &["a"]);
        let toks = ds.train[0].context_tokens(1, &vocab);
        assert_eq!(toks.len(), 2);
        assert_eq!(toks[0][0], vocab.id("spk_a").unwrap());
        assert_eq!(toks[1], vec![vocab.id("spk_b").unwrap(), 6, 7]);
    }
}
