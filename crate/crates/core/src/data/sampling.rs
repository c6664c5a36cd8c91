use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Conversation, FewShotExample, TaskDataset};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShotSplit {
    pub train: Vec<FewShotExample>,
    pub dev: Vec<FewShotExample>,
    /// Categories that had fewer than `k` candidates.
    pub warnings: Vec<String>,
}

/// Draws `k` single-label examples per category from the training split, and
/// a dev set the same way from the dev split (or from unused training
/// conversations when the dataset has no dev split).
pub fn sample_few_shot(ds: &TaskDataset, k: usize, rng: &mut RngStream) -> Result<FewShotSplit> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    for label in &ds.labels {
        let present = ds.train.iter().any(|c| c.utterances.iter().any(|u| &u.emotion == label));
        if !present {
            return Err(Error::Sampling(format!(
                "category {label:?} of task {} never occurs in the training split",
                ds.task_id
            )));
        }
    }
    let mut warnings = Vec::new();
    let mut train_used = HashSet::new();
    let train = draw(ds, &ds.train, k, &mut train_used, rng, "train", &mut warnings);

    let dev = if ds.dev.is_empty() {
        let mut used = train_used.clone();
        draw(ds, &ds.train, k, &mut used, rng, "dev", &mut warnings)
    } else {
        let mut used = HashSet::new();
        draw(ds, &ds.dev, k, &mut used, rng, "dev", &mut warnings)
    };
    Ok(FewShotSplit { train, dev, warnings })
}

fn draw(
    ds: &TaskDataset,
    split: &[Conversation],
    k: usize,
    used: &mut HashSet<String>,
    rng: &mut RngStream,
    split_name: &str,
    warnings: &mut Vec<String>,
) -> Vec<FewShotExample> {
    let mut pools: Vec<Vec<(usize, usize)>> = ds
        .labels
        .iter()
        .map(|label| {
            split
                .iter()
                .enumerate()
                .flat_map(|(ci, c)| {
                    c.utterances
                        .iter()
                        .enumerate()
                        .filter(move |(_, u)| &u.emotion == label)
                        .map(move |(j, _)| (ci, j))
                })
                .collect()
        })
        .collect();
    // scarce categories pick first so "take all" really takes all
    let mut order: Vec<usize> = (0..ds.labels.len()).collect();
    order.sort_by_key(|&li| (pools[li].len(), li));

    let mut picked: Vec<Vec<FewShotExample>> = vec![Vec::new(); ds.labels.len()];
    for li in order {
        let pool = &mut pools[li];
        pool.shuffle(rng);
        for &(ci, j) in pool.iter() {
            if picked[li].len() == k {
                break;
            }
            let conv = &split[ci];
            if !used.insert(conv.id.clone()) {
                continue;
            }
            picked[li].push(FewShotExample {
                conversation: conv.clone(),
                target: j,
                label: ds.labels[li].clone(),
            });
        }
        if picked[li].len() < k {
            let msg = format!(
                "task {} {split_name}: category {:?} has only {} usable examples (k = {k})",
                ds.task_id,
                ds.labels[li],
                picked[li].len()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    picked.into_iter().flatten().collect()
}
