use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MicroF1ExclNeutral,
    WeightedMacroF1,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::MicroF1ExclNeutral => "micro_f1_excl_neutral",
            Metric::WeightedMacroF1 => "weighted_macro_f1",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "micro_f1_excl_neutral" => Ok(Metric::MicroF1ExclNeutral),
            "weighted_macro_f1" => Ok(Metric::WeightedMacroF1),
            other => Err(Error::Argument(format!("unknown metric {other:?}"))),
        }
    }
}

/// Square count table indexed `[gold][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(Error::Argument("confusion matrix must be square".into()));
        }
        Ok(Self { counts })
    }

    pub fn from_pairs(classes: usize, gold: &[usize], pred: &[usize]) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::shape("ConfusionMatrix::from_pairs", gold.len(), pred.len()));
        }
        let mut m = Self::new(classes);
        for (&g, &p) in gold.iter().zip(pred) {
            if g >= classes || p >= classes {
                return Err(Error::Argument(format!("label index out of range ({g}, {p})")));
            }
            m.counts[g][p] += 1;
        }
        Ok(m)
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn tp(&self, c: usize) -> u64 {
        self.counts[c][c]
    }

    pub fn fp(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum::<u64>() - self.counts[c][c]
    }

    pub fn fn_(&self, c: usize) -> u64 {
        self.counts[c].iter().sum::<u64>() - self.counts[c][c]
    }

    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1_from(tp: u64, fp: u64, fn_: u64) -> f64 {
    ratio(2 * tp, 2 * tp + fp + fn_)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

pub fn per_label(cm: &ConfusionMatrix, labels: &[String]) -> Vec<LabelScore> {
    (0..cm.classes())
        .map(|c| {
            let (tp, fp, fn_) = (cm.tp(c), cm.fp(c), cm.fn_(c));
            LabelScore {
                label: labels.get(c).cloned().unwrap_or_else(|| c.to_string()),
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
                f1: f1_from(tp, fp, fn_),
                support: cm.support(c),
            }
        })
        .collect()
}

/// Micro-averaged F1 over every class except `neutral`.
pub fn micro_f1_excluding(cm: &ConfusionMatrix, neutral: Option<usize>) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for c in (0..cm.classes()).filter(|&c| Some(c) != neutral) {
        tp += cm.tp(c);
        fp += cm.fp(c);
        fn_ += cm.fn_(c);
    }
    f1_from(tp, fp, fn_)
}

/// Per-class F1 averaged with weights proportional to class support.
pub fn weighted_macro_f1(cm: &ConfusionMatrix) -> f64 {
    let total: u64 = (0..cm.classes()).map(|c| cm.support(c)).sum();
    if total == 0 {
        return 0.0;
    }
    (0..cm.classes())
        .map(|c| cm.support(c) as f64 * f1_from(cm.tp(c), cm.fp(c), cm.fn_(c)))
        .sum::<f64>()
        / total as f64
}

pub fn score(metric: Metric, cm: &ConfusionMatrix, neutral: Option<usize>) -> f64 {
    match metric {
        Metric::MicroF1ExclNeutral => micro_f1_excluding(cm, neutral),
        Metric::WeightedMacroF1 => weighted_macro_f1(cm),
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Counts TP/FP/FN by walking individual (gold, predicted) pairs.

    pub fn expand(counts: &[Vec<u64>]) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for (g, row) in counts.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                for _ in 0..n {
                    pairs.push((g, p));
                }
            }
        }
        pairs
    }

    fn counts(pairs: &[(usize, usize)], c: usize) -> (f64, f64, f64) {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for &(g, p) in pairs {
            if g == c && p == c {
                tp += 1.0;
            } else if p == c {
                fp += 1.0;
            } else if g == c {
                fn_ += 1.0;
            }
        }
        (tp, fp, fn_)
    }

    fn f1(tp: f64, fp: f64, fn_: f64) -> f64 {
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }

    pub fn micro(pairs: &[(usize, usize)], k: usize, neutral: Option<usize>) -> f64 {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for c in 0..k {
            if Some(c) == neutral {
                continue;
            }
            let (a, b, d) = counts(pairs, c);
            tp += a;
            fp += b;
            fn_ += d;
        }
        f1(tp, fp, fn_)
    }

    pub fn weighted(pairs: &[(usize, usize)], k: usize) -> f64 {
        let n = pairs.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        (0..k)
            .map(|c| {
                let support = pairs.iter().filter(|(g, _)| *g == c).count() as f64;
                let (tp, fp, fn_) = counts(pairs, c);
                support * f1(tp, fp, fn_)
            })
            .sum::<f64>()
            / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn fixed_three_class_matrix_matches_oracle() {
        let counts = vec![vec![5, 1, 0], vec![2, 3, 1], vec![0, 0, 4]];
        let cm = ConfusionMatrix::from_counts(counts.clone()).unwrap();
        let pairs = oracle::expand(&counts);
        for neutral in [None, Some(0), Some(2)] {
            let a = micro_f1_excluding(&cm, neutral);
            assert!((a - oracle::micro(&pairs, 3, neutral)).abs() < 1e-12);
        }
        assert!((weighted_macro_f1(&cm) - oracle::weighted(&pairs, 3)).abs() < 1e-12);
        // hand check: class 0 f1 = 10/13, class 1 = 6/10, class 2 = 8/9
        let expected = (6.0 * 10.0 / 13.0 + 6.0 * 0.6 + 4.0 * 8.0 / 9.0) / 16.0;
        assert!((weighted_macro_f1(&cm) - expected).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_all_neutral_predictions() {
        let gold = [0, 1, 2, 1, 3];
        let cm = ConfusionMatrix::from_pairs(4, &gold, &gold).unwrap();
        assert_eq!(micro_f1_excluding(&cm, Some(0)), 1.0);
        assert_eq!(weighted_macro_f1(&cm), 1.0);
        let gold = [1, 2, 3, 1];
        let cm = ConfusionMatrix::from_pairs(4, &gold, &[0; 4]).unwrap();
        assert_eq!(micro_f1_excluding(&cm, Some(0)), 0.0);
    }

    #[test]
    fn random_matrices_match_oracle() {
        let mut rng = RngStream::new(11);
        for _ in 0..200 {
            let k = 2 + rng.below(5);
            let counts: Vec<Vec<u64>> = (0..k).map(|_| (0..k).map(|_| rng.below(6) as u64).collect()).collect();
            let cm = ConfusionMatrix::from_counts(counts.clone()).unwrap();
            let pairs = oracle::expand(&counts);
            let neutral = if rng.bernoulli(0.5) { Some(rng.below(k)) } else { None };
            assert!((micro_f1_excluding(&cm, neutral) - oracle::micro(&pairs, k, neutral)).abs() < 1e-12);
            assert!((weighted_macro_f1(&cm) - oracle::weighted(&pairs, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn metric_names_round_trip() {
        for m in [Metric::MicroF1ExclNeutral, Metric::WeightedMacroF1] {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!(matches!("accuracy".parse::<Metric>(), Err(Error::Argument(_))));
    }
}
