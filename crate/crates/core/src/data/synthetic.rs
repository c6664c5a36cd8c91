//! Synthetic emotion world: a vocabulary of cue words, emotion words and
//! filler pseudo-words, a pretraining corpus in which cues predict emotion
//! words, and a family of conversation tasks drawn from the same world.
//!
//! A *domain* remaps which emotion a cue signals. Pretraining sequences of a
//! non-default domain carry that domain's marker token in their prefix; task
//! data never does, so a prompt has to supply the missing domain signal.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{Conversation, TaskConfig, TaskDataset, Utterance};
use crate::error::{Error, Result};
use crate::frozen_model::{MaskedSequence, Vocabulary};
use crate::numerics::RngStream;
use crate::pipeline::Metric;
use crate::verbalizer::{LabelWord, VerbalizerConfig, VerbalizerTaskConfig};

pub const SPEAKERS: [&str; 2] = ["spk_a", "spk_b"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmotionSpec {
    pub name: String,
    pub synonyms: Vec<String>,
    pub cues: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    pub marker: String,
    /// Pairs of emotions whose cues trade meaning inside this domain.
    pub swaps: Vec<[String; 2]>,
}

/// Shape of generated conversations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConversationStyle {
    pub min_utterances: usize,
    pub max_utterances: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Probability that an utterance carries a cue of its own emotion.
    pub cue_rate: f64,
    /// Probability of an additional cue drawn from a random emotion.
    pub noise_rate: f64,
    /// Probability that an utterance repeats the previous emotion.
    pub persistence: f64,
}

impl Default for ConversationStyle {
    fn default() -> Self {
        Self {
            min_utterances: 1,
            max_utterances: 4,
            min_words: 3,
            max_words: 6,
            cue_rate: 0.9,
            noise_rate: 0.15,
            persistence: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub sequences: usize,
    pub min_prefix: usize,
    pub max_prefix: usize,
    /// Share of sequences drawn from the default (unmarked) domain.
    pub default_domain_share: f64,
    pub style: ConversationStyle,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            sequences: 20_000,
            min_prefix: 3,
            max_prefix: 12,
            default_domain_share: 0.4,
            style: ConversationStyle::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub fillers: usize,
    pub zipf_exponent: f64,
    pub emotions: Vec<EmotionSpec>,
    pub domains: Vec<DomainSpec>,
    pub corpus: CorpusConfig,
}

fn emotion(name: &str, synonyms: [&str; 3], cues: [&str; 8]) -> EmotionSpec {
    EmotionSpec {
        name: name.into(),
        synonyms: synonyms.iter().map(|s| s.to_string()).collect(),
        cues: cues.iter().map(|s| s.to_string()).collect(),
    }
}

fn domain(name: &str, marker: &str, swaps: &[[&str; 2]]) -> DomainSpec {
    DomainSpec {
        name: name.into(),
        marker: marker.into(),
        swaps: swaps.iter().map(|[a, b]| [a.to_string(), b.to_string()]).collect(),
    }
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            fillers: 420,
            zipf_exponent: 1.0,
            emotions: vec![
                emotion(
                    "neutral",
                    ["neutral", "calm", "okay"],
                    ["schedule", "meeting", "report", "weather", "train", "lunch", "email", "paper"],
                ),
                emotion(
                    "happiness",
                    ["happy", "joy", "glad"],
                    ["grin", "smile", "laugh", "party", "sunshine", "hug", "cheer", "win"],
                ),
                emotion(
                    "sadness",
                    ["sad", "sorrow", "gloomy"],
                    ["tears", "cry", "lonely", "funeral", "loss", "sigh", "grief", "miss"],
                ),
                emotion(
                    "anger",
                    ["angry", "mad", "furious"],
                    ["yell", "rage", "slam", "unfair", "insult", "shout", "fight", "blame"],
                ),
                emotion(
                    "fear",
                    ["scared", "afraid", "fearful"],
                    ["dark", "scream", "shiver", "danger", "ghost", "panic", "threat", "tremble"],
                ),
                emotion(
                    "surprise",
                    ["surprised", "shocked", "amazed"],
                    ["sudden", "wow", "unexpected", "gasp", "whoa", "twist", "reveal", "stunned"],
                ),
                emotion(
                    "disgust",
                    ["disgusted", "gross", "repulsed"],
                    ["rotten", "vomit", "stink", "filthy", "slime", "mold", "sewage", "greasy"],
                ),
            ],
            domains: vec![
                domain("stage", "dom_stage", &[["happiness", "anger"], ["fear", "surprise"]]),
                domain("mirror", "dom_mirror", &[["happiness", "sadness"], ["anger", "fear"]]),
                domain(
                    "swamp",
                    "dom_swamp",
                    &[["neutral", "disgust"], ["sadness", "surprise"], ["fear", "happiness"]],
                ),
            ],
            corpus: CorpusConfig::default(),
        }
    }
}

impl WorldConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Pronounceable filler words built from consonant-vowel syllables.
fn filler_word(i: usize) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let mut n = i;
    let mut s = String::new();
    for _ in 0..3 {
        s.push(C[n % C.len()] as char);
        n /= C.len();
        s.push(V[n % V.len()] as char);
        n /= V.len();
    }
    s
}

/// The instantiated world: vocabulary plus index tables.
#[derive(Clone, Debug)]
pub struct World {
    config: WorldConfig,
    vocab: Vocabulary,
    concept_index: HashMap<String, usize>,
    cue_ids: Vec<Vec<usize>>,
    synonym_ids: Vec<Vec<usize>>,
    filler_ids: Vec<usize>,
    filler_dist: WeightedIndex<f64>,
    marker_ids: Vec<usize>,
    /// perms[d][cue concept] = expressed concept; domain 0 is the identity.
    perms: Vec<Vec<usize>>,
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self> {
        if config.emotions.is_empty() {
            return Err(Error::Config("world declares no emotions".into()));
        }
        let mut words: Vec<String> = SPEAKERS.iter().map(|s| s.to_string()).collect();
        for e in &config.emotions {
            if e.synonyms.is_empty() || e.cues.is_empty() {
                return Err(Error::Config(format!("emotion {} needs synonyms and cues", e.name)));
            }
            words.extend(e.synonyms.iter().cloned());
            words.extend(e.cues.iter().cloned());
        }
        words.extend(config.domains.iter().map(|d| d.marker.clone()));
        let fillers: Vec<String> = (0..config.fillers).map(filler_word).collect();
        words.extend(fillers.iter().cloned());
        let vocab = Vocabulary::new(words)?;
        let id = |w: &str| vocab.id(w).expect("word registered");

        let concept_index: HashMap<String, usize> = config.emotions.iter().enumerate().map(|(i, e)| (e.name.clone(), i)).collect();
        let k = config.emotions.len();
        let mut perms = vec![(0..k).collect::<Vec<_>>()];
        for d in &config.domains {
            let mut p: Vec<usize> = (0..k).collect();
            for [a, b] in &d.swaps {
                let ia = *concept_index
                    .get(a)
                    .ok_or_else(|| Error::Config(format!("domain {}: unknown emotion {a}", d.name)))?;
                let ib = *concept_index
                    .get(b)
                    .ok_or_else(|| Error::Config(format!("domain {}: unknown emotion {b}", d.name)))?;
                p.swap(ia, ib);
            }
            perms.push(p);
        }
        if fillers.is_empty() {
            return Err(Error::Config("world needs at least one filler word".into()));
        }
        let filler_dist = WeightedIndex::new((0..fillers.len()).map(|r| 1.0 / ((r + 1) as f64).powf(config.zipf_exponent)))
            .map_err(|e| Error::Config(format!("filler weights: {e}")))?;
        Ok(Self {
            cue_ids: config.emotions.iter().map(|e| e.cues.iter().map(|c| id(c)).collect()).collect(),
            synonym_ids: config.emotions.iter().map(|e| e.synonyms.iter().map(|c| id(c)).collect()).collect(),
            filler_ids: fillers.iter().map(|f| id(f)).collect(),
            marker_ids: config.domains.iter().map(|d| id(&d.marker)).collect(),
            filler_dist,
            concept_index,
            perms,
            vocab,
            config,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn concept(&self, name: &str) -> Option<usize> {
        self.concept_index.get(name).copied()
    }

    pub fn concept_name(&self, c: usize) -> &str {
        &self.config.emotions[c].name
    }

    /// 0 for the default domain, otherwise 1 + position in the config.
    pub fn domain_index(&self, name: &str) -> Option<usize> {
        if name == "default" {
            return Some(0);
        }
        self.config.domains.iter().position(|d| d.name == name).map(|i| i + 1)
    }

    pub fn marker_id(&self, domain: usize) -> Option<usize> {
        domain.checked_sub(1).map(|i| self.marker_ids[i])
    }

    /// Emotion expressed by a cue of concept `cue` inside `domain`.
    pub fn expressed(&self, domain: usize, cue: usize) -> usize {
        self.perms[domain][cue]
    }

    fn cue_concept(&self, domain: usize, expressed: usize) -> usize {
        self.perms[domain].iter().position(|&e| e == expressed).expect("permutation")
    }

    fn filler(&self, rng: &mut RngStream) -> usize {
        self.filler_ids[self.filler_dist.sample(rng)]
    }

    fn utterance_words(&self, domain: usize, concept: usize, style: &ConversationStyle, rng: &mut RngStream) -> Vec<usize> {
        let span = style.max_words.saturating_sub(style.min_words) + 1;
        let len = style.min_words + rng.below(span);
        let mut words: Vec<usize> = (0..len).map(|_| self.filler(rng)).collect();
        let mut insert = |w: usize, rng: &mut RngStream| {
            let at = rng.below(words.len() + 1);
            words.insert(at, w);
        };
        if rng.bernoulli(style.cue_rate) {
            let cues = &self.cue_ids[self.cue_concept(domain, concept)];
            insert(cues[rng.below(cues.len())], rng);
        }
        if rng.bernoulli(style.noise_rate) {
            let other = rng.below(self.cue_ids.len());
            let cues = &self.cue_ids[other];
            insert(cues[rng.below(cues.len())], rng);
        }
        words
    }

    /// Emotion sequence and word ids of one conversation.
    fn conversation(
        &self,
        domain: usize,
        concepts: &[usize],
        weights: &[f64],
        style: &ConversationStyle,
        rng: &mut RngStream,
    ) -> Vec<(usize, usize, Vec<usize>)> {
        let dist = WeightedIndex::new(weights).expect("positive weights");
        let span = style.max_utterances.saturating_sub(style.min_utterances) + 1;
        let n = style.min_utterances.max(1) + rng.below(span);
        let first = rng.below(2);
        let mut prev: Option<usize> = None;
        (0..n)
            .map(|j| {
                let c = match prev {
                    Some(p) if rng.bernoulli(style.persistence) => p,
                    _ => concepts[dist.sample(rng)],
                };
                prev = Some(c);
                let speaker = (first + j) % 2;
                (speaker, c, self.utterance_words(domain, c, style, rng))
            })
            .collect()
    }

    /// Pretraining sequences: `[prefix fillers (+marker)] [UNK] utterances [MASK]`
    /// where the mask hides a synonym of the last utterance's emotion.
    pub fn pretraining_corpus(&self, cfg: &CorpusConfig, rng: &mut RngStream) -> Vec<MaskedSequence> {
        let k = self.config.emotions.len();
        let concepts: Vec<usize> = (0..k).collect();
        let weights = vec![1.0; k];
        let speaker_ids: Vec<usize> = SPEAKERS.iter().map(|s| self.vocab.id(s).unwrap()).collect();
        (0..cfg.sequences)
            .map(|_| {
                let domain = if self.marker_ids.is_empty() || rng.bernoulli(cfg.default_domain_share) {
                    0
                } else {
                    1 + rng.below(self.marker_ids.len())
                };
                let span = cfg.max_prefix.saturating_sub(cfg.min_prefix) + 1;
                let plen = cfg.min_prefix + rng.below(span);
                let mut tokens: Vec<usize> = (0..plen).map(|_| self.filler(rng)).collect();
                if let Some(m) = self.marker_id(domain) {
                    let at = rng.below(tokens.len() + 1);
                    tokens.insert(at, m);
                }
                tokens.push(Vocabulary::UNK_ID);
                let conv = self.conversation(domain, &concepts, &weights, &cfg.style, rng);
                for (j, (spk, _, words)) in conv.iter().enumerate() {
                    if j > 0 {
                        tokens.push(Vocabulary::SEP_ID);
                    }
                    tokens.push(speaker_ids[*spk]);
                    tokens.extend(words);
                }
                tokens.push(Vocabulary::MASK_ID);
                let last = conv.last().expect("non-empty").1;
                let syn = &self.synonym_ids[last];
                MaskedSequence {
                    tokens,
                    target: syn[rng.below(syn.len())],
                }
            })
            .collect()
    }

    /// Generates the three splits of a task.
    pub fn task(&self, spec: &TaskSpec, rng: &mut RngStream) -> Result<TaskDataset> {
        let domain = self
            .domain_index(&spec.domain)
            .ok_or_else(|| Error::Config(format!("task {}: unknown domain {}", spec.id, spec.domain)))?;
        let mut concepts = Vec::new();
        for l in &spec.labels {
            concepts.push(
                self.concept(&l.emotion)
                    .ok_or_else(|| Error::Config(format!("task {}: unknown emotion {}", spec.id, l.emotion)))?,
            );
        }
        if concepts.iter().collect::<std::collections::HashSet<_>>().len() != concepts.len() {
            return Err(Error::Config(format!("task {}: two labels denote the same emotion", spec.id)));
        }
        let weights = match &spec.label_weights {
            Some(w) if w.len() == concepts.len() && w.iter().all(|&x| x > 0.0) => w.clone(),
            Some(_) => {
                return Err(Error::Config(format!(
                    "task {}: label_weights must be positive, one per label",
                    spec.id
                )))
            }
            None => vec![1.0; concepts.len()],
        };
        let label_of: HashMap<usize, &str> = concepts.iter().zip(&spec.labels).map(|(&c, l)| (c, l.label.as_str())).collect();
        let split = |name: &str, n: usize, rng: &mut RngStream| -> Vec<Conversation> {
            (0..n)
                .map(|i| {
                    let conv = self.conversation(domain, &concepts, &weights, &spec.style, rng);
                    Conversation {
                        id: format!("{}-{name}-{i:04}", spec.id),
                        utterances: conv
                            .into_iter()
                            .map(|(spk, c, words)| Utterance {
                                speaker: SPEAKERS[spk].to_string(),
                                text: words.iter().map(|&w| self.vocab.token(w)).collect::<Vec<_>>().join(" "),
                                emotion: label_of[&c].to_string(),
                            })
                            .collect(),
                    }
                })
                .collect()
        };
        let train = split("train", spec.train_conversations, &mut rng.derive("train"));
        let dev = split("dev", spec.dev_conversations, &mut rng.derive("dev"));
        let test = split("test", spec.test_conversations, &mut rng.derive("test"));
        Ok(TaskDataset {
            task_id: spec.id.clone(),
            labels: spec.labels.iter().map(|l| l.label.clone()).collect(),
            neutral: spec.neutral.clone(),
            train,
            dev,
            test,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskLabel {
    /// Label name as it appears in the data.
    pub label: String,
    /// World emotion the label denotes.
    pub emotion: String,
    /// Verbalizer word for the label.
    pub token: String,
}

fn default_train() -> usize {
    200
}
fn default_dev() -> usize {
    80
}
fn default_test() -> usize {
    80
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub id: String,
    pub domain: String,
    pub labels: Vec<TaskLabel>,
    #[serde(default)]
    pub neutral: Option<String>,
    pub metric: Metric,
    #[serde(default)]
    pub label_weights: Option<Vec<f64>>,
    /// Generator stream label; two tasks sharing it are exact clones.
    #[serde(default)]
    pub stream: Option<String>,
    #[serde(default = "default_train")]
    pub train_conversations: usize,
    #[serde(default = "default_dev")]
    pub dev_conversations: usize,
    #[serde(default = "default_test")]
    pub test_conversations: usize,
    #[serde(default)]
    pub style: ConversationStyle,
}

/// A world plus the tasks generated from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub seed: u64,
    #[serde(default)]
    pub world: WorldConfig,
    pub tasks: Vec<TaskSpec>,
    /// Synonym groups for the union verbalizer, as lists of `task:label`.
    #[serde(default)]
    pub synonym_groups: Vec<Vec<String>>,
}

impl SuiteConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Label words of every task plus the declared synonym groups, or the
    /// derived ones when none are declared.
    pub fn verbalizer_config(&self) -> VerbalizerConfig {
        VerbalizerConfig {
            tasks: self
                .tasks
                .iter()
                .map(|t| VerbalizerTaskConfig {
                    id: t.id.clone(),
                    neutral: t.neutral.clone(),
                    labels: t
                        .labels
                        .iter()
                        .map(|l| LabelWord {
                            label: l.label.clone(),
                            token: l.token.clone(),
                        })
                        .collect(),
                })
                .collect(),
            synonym_groups: if self.synonym_groups.is_empty() {
                self.derived_synonym_groups()
            } else {
                self.synonym_groups.clone()
            },
        }
    }

    /// Synonym groups derived from the world: every task label denoting the
    /// same emotion lands in one group.
    pub fn derived_synonym_groups(&self) -> Vec<Vec<String>> {
        let mut by_emotion: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for t in &self.tasks {
            for l in &t.labels {
                by_emotion
                    .entry(l.emotion.as_str())
                    .or_default()
                    .push(format!("{}:{}", t.id, l.label));
            }
        }
        by_emotion.into_values().filter(|g| g.len() > 1).collect()
    }
}

/// Everything generated for a suite, in memory.
#[derive(Clone, Debug)]
pub struct GeneratedSuite {
    pub world: World,
    pub tasks: Vec<TaskDataset>,
}

impl GeneratedSuite {
    pub fn generate(cfg: &SuiteConfig) -> Result<Self> {
        let world = World::new(cfg.world.clone())?;
        let root = RngStream::new(cfg.seed);
        let tasks = cfg
            .tasks
            .iter()
            .map(|spec| {
                let stream = spec.stream.clone().unwrap_or_else(|| spec.id.clone());
                let mut rng = root.derive(&format!("task:{stream}"));
                let mut ds = world.task(spec, &mut rng)?;
                if spec.stream.is_some() {
                    // clones share content but keep their own conversation ids
                    for split in [&mut ds.train, &mut ds.dev, &mut ds.test] {
                        for c in split.iter_mut() {
                            c.id = c.id.replacen(&format!("{stream}-"), &format!("{}-", spec.id), 1);
                        }
                    }
                }
                Ok(ds)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { world, tasks })
    }

    pub fn task(&self, id: &str) -> Option<&TaskDataset> {
        self.tasks.iter().find(|t| t.task_id == id)
    }

    /// Writes `<id>.{train,dev,test}.jsonl` and `<id>.toml` task configs.
    pub fn write(&self, cfg: &SuiteConfig, dir: &Path) -> Result<Vec<TaskConfig>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = Vec::new();
        for (spec, ds) in cfg.tasks.iter().zip(&self.tasks) {
            let file = |split: &str| dir.join(format!("{}.{split}.jsonl", spec.id));
            super::write_jsonl(&file("train"), &ds.train)?;
            super::write_jsonl(&file("dev"), &ds.dev)?;
            super::write_jsonl(&file("test"), &ds.test)?;
            let tc = TaskConfig {
                id: spec.id.clone(),
                labels: ds.labels.clone(),
                neutral: ds.neutral.clone(),
                metric: spec.metric,
                train: format!("{}.train.jsonl", spec.id).into(),
                dev: Some(format!("{}.dev.jsonl", spec.id).into()),
                test: format!("{}.test.jsonl", spec.id).into(),
            };
            let path = dir.join(format!("{}.toml", spec.id));
            let text = toml::to_string(&tc).map_err(|e| Error::Config(e.to_string()))?;
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            out.push(TaskConfig::from_file(&path)?);
        }
        Ok(out)
    }
}
