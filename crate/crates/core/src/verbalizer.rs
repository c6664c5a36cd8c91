//! Label words: decoding mask logits into task labels, and the union
//! verbalizer that pools synonymous label words across tasks.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frozen_model::Vocabulary;
use crate::numerics::softmax_in_place;

/// Ordered label → single-token mapping for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskVerbalizer {
    task_id: String,
    labels: Vec<String>,
    words: Vec<String>,
    tokens: Vec<usize>,
    neutral: Option<String>,
}

impl TaskVerbalizer {
    pub fn new(task_id: &str, pairs: &[(String, String)], neutral: Option<String>, vocab: &Vocabulary) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Config(format!("verbalizer for {task_id} is empty")));
        }
        let mut labels = Vec::with_capacity(pairs.len());
        let mut words = Vec::with_capacity(pairs.len());
        let mut tokens = Vec::with_capacity(pairs.len());
        for (label, word) in pairs {
            if labels.contains(label) {
                return Err(Error::Config(format!("{task_id}: duplicate label {label:?}")));
            }
            let id = vocab
                .id(word)
                .filter(|&id| !Vocabulary::is_special(id))
                .ok_or_else(|| Error::Config(format!("{task_id}: label word {word:?} is not a vocabulary token")))?;
            if tokens.contains(&id) {
                return Err(Error::Config(format!("{task_id}: label word {word:?} used twice")));
            }
            labels.push(label.clone());
            words.push(word.clone());
            tokens.push(id);
        }
        if let Some(n) = &neutral {
            if !labels.contains(n) {
                return Err(Error::Config(format!("{task_id}: neutral label {n:?} is not a label")));
            }
        }
        Ok(Self {
            task_id: task_id.to_string(),
            labels,
            words,
            tokens,
            neutral,
        })
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn token_ids(&self) -> &[usize] {
        &self.tokens
    }

    pub fn neutral(&self) -> Option<&str> {
        self.neutral.as_deref()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A decoded prediction: label index, its name, and the label distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub index: usize,
    pub label: String,
    pub distribution: Vec<f64>,
}

/// First index of the maximum, so ties go to the lowest label index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_finite(logits: &[f64]) -> Result<()> {
    if logits.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Argument("logits must be finite".into()))
    }
}

/// Softmax over the verbalizer words only. `logits` spans the vocabulary.
pub fn decode_label(logits: &[f64], verb: &TaskVerbalizer) -> Result<Decoded> {
    let sub: Vec<f64> = verb
        .tokens
        .iter()
        .map(|&t| {
            logits
                .get(t)
                .copied()
                .ok_or_else(|| Error::shape("decode_label", format!("token id {t}"), format!("{} logits", logits.len())))
        })
        .collect::<Result<_>>()?;
    decode_label_subset(&sub, verb)
}

/// As [`decode_label`], with logits already restricted to `verb.token_ids()`.
pub fn decode_label_subset(sub: &[f64], verb: &TaskVerbalizer) -> Result<Decoded> {
    if verb.is_empty() {
        return Err(Error::Config("empty verbalizer".into()));
    }
    if sub.len() != verb.len() {
        return Err(Error::shape(
            "decode_label_subset",
            format!("{} labels", verb.len()),
            format!("{} logits", sub.len()),
        ));
    }
    check_finite(sub)?;
    let mut p = sub.to_vec();
    softmax_in_place(&mut p, 1.0);
    let index = argmax(&p);
    Ok(Decoded {
        index,
        label: verb.labels[index].clone(),
        distribution: p,
    })
}

/// Union of several task verbalizers with declared synonym groups.
#[derive(Clone, Debug, PartialEq)]
pub struct UnionVerbalizer {
    tasks: Vec<TaskVerbalizer>,
    union_names: Vec<String>,
    mapping: HashMap<(String, String), usize>,
    members: Vec<Vec<(String, String)>>,
    tokens: Vec<usize>,
    token_union: Vec<usize>,
}

fn parse_member(s: &str) -> Result<(String, String)> {
    s.split_once(':')
        .map(|(t, l)| (t.to_string(), l.to_string()))
        .ok_or_else(|| Error::Config(format!("synonym group member {s:?} is not of the form task:label")))
}

/// Builds the union: one id per synonym group, singletons for everything else.
pub fn build_union(verbalizers: &[TaskVerbalizer], groups: &[Vec<String>]) -> Result<UnionVerbalizer> {
    if verbalizers.is_empty() {
        return Err(Error::Config("union verbalizer needs at least one task".into()));
    }
    let mut ids = std::collections::HashSet::new();
    for v in verbalizers {
        if !ids.insert(v.task_id.clone()) {
            return Err(Error::Config(format!("task {} registered twice", v.task_id)));
        }
    }
    let registered = |t: &str, l: &str| verbalizers.iter().any(|v| v.task_id == t && v.labels.iter().any(|x| x == l));
    let mut mapping: HashMap<(String, String), usize> = HashMap::new();
    let mut union_names = Vec::new();
    let mut members: Vec<Vec<(String, String)>> = Vec::new();
    for group in groups {
        let uid = union_names.len();
        let mut list = Vec::new();
        for m in group {
            let key = parse_member(m)?;
            if !registered(&key.0, &key.1) {
                return Err(Error::Config(format!("synonym group member {m} is not a registered task label")));
            }
            if mapping.insert(key.clone(), uid).is_some() {
                return Err(Error::Config(format!("label {m} appears in more than one synonym group")));
            }
            list.push(key);
        }
        if list.is_empty() {
            continue;
        }
        union_names.push(group.join("|"));
        members.push(list);
    }
    for v in verbalizers {
        for l in &v.labels {
            let key = (v.task_id.clone(), l.clone());
            if !mapping.contains_key(&key) {
                mapping.insert(key.clone(), union_names.len());
                union_names.push(format!("{}:{}", v.task_id, l));
                members.push(vec![key]);
            }
        }
    }
    // distinct label words; one word may serve several tasks only within one union id
    let mut token_union: BTreeMap<usize, usize> = BTreeMap::new();
    let mut tokens = Vec::new();
    for v in verbalizers {
        for (l, &t) in v.labels.iter().zip(&v.tokens) {
            let uid = mapping[&(v.task_id.clone(), l.clone())];
            match token_union.get(&t) {
                Some(&u) if u != uid => {
                    return Err(Error::Config(format!(
                        "label word {} maps to two different union emotions",
                        v.words[v.label_index(l).expect("label present")]
                    )))
                }
                Some(_) => {}
                None => {
                    token_union.insert(t, uid);
                    tokens.push(t);
                }
            }
        }
    }
    let token_union = tokens.iter().map(|t| token_union[t]).collect();
    Ok(UnionVerbalizer {
        tasks: verbalizers.to_vec(),
        union_names,
        mapping,
        members,
        tokens,
        token_union,
    })
}

impl UnionVerbalizer {
    pub fn union_count(&self) -> usize {
        self.union_names.len()
    }

    pub fn union_name(&self, uid: usize) -> &str {
        &self.union_names[uid]
    }

    /// `h(task, label)`.
    pub fn union_id(&self, task: &str, label: &str) -> Option<usize> {
        self.mapping.get(&(task.to_string(), label.to_string())).copied()
    }

    /// `h⁻¹(uid)`: every (task, label) pair mapped to the union id.
    pub fn members(&self, uid: usize) -> &[(String, String)] {
        &self.members[uid]
    }

    /// Distinct label-word token ids across all tasks.
    pub fn token_ids(&self) -> &[usize] {
        &self.tokens
    }

    pub fn task(&self, id: &str) -> Option<&TaskVerbalizer> {
        self.tasks.iter().find(|v| v.task_id == id)
    }

    pub fn tasks(&self) -> &[TaskVerbalizer] {
        &self.tasks
    }

    /// Union-emotion probabilities from logits restricted to `token_ids()`.
    pub fn union_distribution(&self, sub: &[f64]) -> Result<Vec<f64>> {
        if sub.len() != self.tokens.len() {
            return Err(Error::shape(
                "union_distribution",
                format!("{} label words", self.tokens.len()),
                format!("{} logits", sub.len()),
            ));
        }
        check_finite(sub)?;
        let mut p = sub.to_vec();
        softmax_in_place(&mut p, 1.0);
        let mut u = vec![0.0; self.union_names.len()];
        for (pi, &uid) in p.iter().zip(&self.token_union) {
            u[uid] += pi;
        }
        Ok(u)
    }

    /// As [`decode_union`], with logits already restricted to `token_ids()`.
    pub fn decode_subset(&self, sub: &[f64], target: &str) -> Result<Decoded> {
        let verb = self
            .task(target)
            .ok_or_else(|| Error::Argument(format!("task {target} is not registered in the union verbalizer")))?;
        let u = self.union_distribution(sub)?;
        let mut q: Vec<f64> = verb
            .labels
            .iter()
            .map(|l| u[self.mapping[&(target.to_string(), l.clone())]])
            .collect();
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        let index = argmax(&q);
        Ok(Decoded {
            index,
            label: verb.labels[index].clone(),
            distribution: q,
        })
    }
}

/// Pools word probabilities per union emotion, then renormalizes over the
/// target task's labels. Union emotions without a target label drop out.
pub fn decode_union(logits: &[f64], union: &UnionVerbalizer, target: &str) -> Result<Decoded> {
    let sub: Vec<f64> = union
        .tokens
        .iter()
        .map(|&t| {
            logits
                .get(t)
                .copied()
                .ok_or_else(|| Error::shape("decode_union", format!("token id {t}"), format!("{} logits", logits.len())))
        })
        .collect::<Result<_>>()?;
    union.decode_subset(&sub, target)
}

/// `{label, token}` entry of a verbalizer config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelWord {
    pub label: String,
    pub token: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerbalizerTaskConfig {
    pub id: String,
    #[serde(default)]
    pub neutral: Option<String>,
    pub labels: Vec<LabelWord>,
}

/// Tasks, label words and synonym groups.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerbalizerConfig {
    pub tasks: Vec<VerbalizerTaskConfig>,
    #[serde(default)]
    pub synonym_groups: Vec<Vec<String>>,
}

impl VerbalizerConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn task_verbalizer(&self, id: &str, vocab: &Vocabulary) -> Result<TaskVerbalizer> {
        let t = self
            .tasks
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::Config(format!("no verbalizer declared for task {id}")))?;
        let pairs: Vec<(String, String)> = t.labels.iter().map(|l| (l.label.clone(), l.token.clone())).collect();
        TaskVerbalizer::new(&t.id, &pairs, t.neutral.clone(), vocab)
    }

    pub fn verbalizers(&self, vocab: &Vocabulary) -> Result<Vec<TaskVerbalizer>> {
        self.tasks.iter().map(|t| self.task_verbalizer(&t.id, vocab)).collect()
    }

    /// Union over the listed tasks, keeping only synonym-group members that
    /// belong to them.
    pub fn union_for(&self, task_ids: &[&str], vocab: &Vocabulary) -> Result<UnionVerbalizer> {
        let verbs = task_ids
            .iter()
            .map(|id| self.task_verbalizer(id, vocab))
            .collect::<Result<Vec<_>>>()?;
        let groups: Vec<Vec<String>> = self
            .synonym_groups
            .iter()
            .map(|g| {
                g.iter()
                    .filter(|m| m.split_once(':').is_some_and(|(t, _)| task_ids.contains(&t)))
                    .cloned()
                    .collect::<Vec<_>>()
            })
            .filter(|g| !g.is_empty())
            .collect();
        build_union(&verbs, &groups)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Vocabulary::new(["happy", "joy", "sad", "angry", "neutral", "fear", "sorrow"]).unwrap()
    }

    fn pairs(p: &[(&str, &str)]) -> Vec<(String, String)> {
        p.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn daily(v: &Vocabulary) -> TaskVerbalizer {
        TaskVerbalizer::new(
            "daily",
            &pairs(&[
                ("neutral", "neutral"),
                ("happiness", "happy"),
                ("sadness", "sad"),
                ("anger", "angry"),
            ]),
            Some("neutral".into()),
            v,
        )
        .unwrap()
    }

    fn meld(v: &Vocabulary) -> TaskVerbalizer {
        TaskVerbalizer::new("meld", &pairs(&[("joy", "joy"), ("sadness", "sorrow"), ("fear", "fear")]), None, v).unwrap()
    }

    #[test]
    fn argmax_picks_the_peak_word() {
        let v = vocab();
        let d = daily(&v);
        let mut logits = vec![0.0; v.len()];
        logits[v.id("sad").unwrap()] = 3.0;
        let out = decode_label(&logits, &d).unwrap();
        assert_eq!(out.label, "sadness");
        assert!((out.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn uniform_logits_tie_to_first_label() {
        let v = vocab();
        let d = daily(&v);
        let out = decode_label(&vec![0.7; v.len()], &d).unwrap();
        assert_eq!(out.index, 0);
        for p in &out.distribution {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_verbalizers_rejected() {
        let v = vocab();
        assert!(TaskVerbalizer::new("t", &[], None, &v).is_err());
        assert!(TaskVerbalizer::new("t", &pairs(&[("a", "nope")]), None, &v).is_err());
        assert!(TaskVerbalizer::new("t", &pairs(&[("a", "sad"), ("a", "joy")]), None, &v).is_err());
        assert!(TaskVerbalizer::new("t", &pairs(&[("a", "sad"), ("b", "sad")]), None, &v).is_err());
        assert!(TaskVerbalizer::new("t", &pairs(&[("a", "[MASK]")]), None, &v).is_err());
    }

    #[test]
    fn happiness_and_joy_share_a_union_id() {
        let v = vocab();
        let u = build_union(&[daily(&v), meld(&v)], &[vec!["daily:happiness".into(), "meld:joy".into()]]).unwrap();
        assert_eq!(u.union_id("daily", "happiness"), u.union_id("meld", "joy"));
        assert_ne!(u.union_id("daily", "sadness"), u.union_id("meld", "sadness"));
        for t in u.tasks() {
            for l in t.labels() {
                assert!(u.union_id(t.task_id(), l).is_some());
            }
        }
        // mass on MELD's word decodes to DailyDialog's label
        let mut logits = vec![0.0; v.len()];
        logits[v.id("joy").unwrap()] = 6.0;
        assert_eq!(decode_union(&logits, &u, "daily").unwrap().label, "happiness");
    }

    #[test]
    fn no_synonyms_gives_bijective_ids() {
        let v = vocab();
        let u = build_union(&[daily(&v)], &[]).unwrap();
        assert_eq!(u.union_count(), 4);
        let ids: std::collections::HashSet<_> = daily(&v).labels().iter().map(|l| u.union_id("daily", l).unwrap()).collect();
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn group_errors() {
        let v = vocab();
        let both = vec![vec!["daily:happiness".to_string()], vec!["daily:happiness".to_string()]];
        assert!(matches!(build_union(&[daily(&v)], &both), Err(Error::Config(_))));
        let unknown = vec![vec!["daily:bliss".to_string()]];
        assert!(build_union(&[daily(&v)], &unknown).is_err());
        let u = build_union(&[daily(&v)], &[]).unwrap();
        assert!(matches!(decode_union(&[0.0; 11], &u, "meld"), Err(Error::Argument(_))));
    }

    #[test]
    fn two_synonym_words_double_the_mass() {
        // six-token toy vocabulary: 4 specials + two synonym words
        let v = Vocabulary::new(["glad", "cheery"]).unwrap();
        let a = TaskVerbalizer::new("a", &pairs(&[("pos", "glad")]), None, &v).unwrap();
        let b = TaskVerbalizer::new("b", &pairs(&[("pos", "cheery")]), None, &v).unwrap();
        let u = build_union(&[a, b], &[vec!["a:pos".into(), "b:pos".into()]]).unwrap();
        let logits = [0.0, 0.0, 0.0, 0.0, 1.3, 1.3];
        let dist = u.union_distribution(&[logits[4], logits[5]]).unwrap();
        // each word carries p = 1/2 over the two-word subset; union gets 2p
        assert_eq!(dist.len(), 1);
        assert!((dist[0] - 2.0 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn synonym_pooling_can_flip_the_decision() {
        let v = vocab();
        let d = TaskVerbalizer::new("d", &pairs(&[("happiness", "happy"), ("sadness", "sad")]), None, &v).unwrap();
        let m = TaskVerbalizer::new("m", &pairs(&[("joy", "joy"), ("sorrow", "fear")]), None, &v).unwrap();
        let u = build_union(&[d.clone(), m], &[vec!["d:happiness".into(), "m:joy".into()]]).unwrap();
        let mut logits = vec![-9.0; v.len()];
        logits[v.id("happy").unwrap()] = 1.0;
        logits[v.id("joy").unwrap()] = 1.0;
        logits[v.id("sad").unwrap()] = 1.5;
        assert_eq!(decode_label(&logits, &d).unwrap().label, "sadness");
        assert_eq!(decode_union(&logits, &u, "d").unwrap().label, "happiness");
    }

    #[test]
    fn config_parses_and_restricts_groups() {
        let text = r#"
            synonym_groups = [["daily:happiness", "meld:joy"]]
            [[tasks]]
            id = "daily"
            neutral = "neutral"
            labels = [{label = "neutral", token = "neutral"}, {label = "happiness", token = "happy"}]
            [[tasks]]
            id = "meld"
            labels = [{label = "joy", token = "joy"}]
        "#;
        let cfg: VerbalizerConfig = toml::from_str(text).unwrap();
        let v = vocab();
        let u = cfg.union_for(&["daily", "meld"], &v).unwrap();
        assert_eq!(u.union_id("daily", "happiness"), u.union_id("meld", "joy"));
        let solo = cfg.union_for(&["daily"], &v).unwrap();
        assert_eq!(solo.union_count(), 2);
    }

    proptest! {
        #[test]
        fn argmax_shift_invariant(raw in proptest::collection::vec(-20.0f64..20.0, 11), c in -100.0f64..100.0) {
            let v = vocab();
            let d = daily(&v);
            let shifted: Vec<f64> = raw.iter().map(|x| x + c).collect();
            prop_assert_eq!(decode_label(&raw, &d).unwrap().index, decode_label(&shifted, &d).unwrap().index);
        }

        #[test]
        fn singleton_union_equals_task_decoding(raw in proptest::collection::vec(-20.0f64..20.0, 11)) {
            let v = vocab();
            let u = build_union(&[daily(&v), meld(&v)], &[]).unwrap();
            for t in ["daily", "meld"] {
                let a = decode_label(&raw, u.task(t).unwrap()).unwrap();
                let b = decode_union(&raw, &u, t).unwrap();
                prop_assert_eq!(a.index, b.index);
                for (x, y) in a.distribution.iter().zip(&b.distribution) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
