//! The small masked-token encoder that plays the role of the pretrained
//! language model. It is trained once, frozen, and afterwards only ever
//! evaluated.

mod checkpoint;
mod train;
mod transformer;
mod vocab;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngRecord, RngStream};

pub use checkpoint::{RecordFile, FORMAT_VERSION, MAGIC};
pub use train::{pretrain, MaskedSequence, PretrainConfig, PretrainSummary};
pub use transformer::ModelConfig;
pub use vocab::{Vocabulary, MASK, PAD, SEP, UNK};

use transformer::Params;

/// A model input: continuous prompt rows followed by ordinary token ids, with
/// exactly one `[MASK]` among the tokens.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedInput {
    prompt: Matrix,
    tokens: Vec<usize>,
    mask_position: usize,
}

impl EncodedInput {
    /// `prompt` may have zero rows. The mask position is located in `tokens`.
    pub fn new(prompt: Matrix, tokens: Vec<usize>) -> Result<Self> {
        let mut masks = tokens.iter().enumerate().filter(|(_, &t)| t == Vocabulary::MASK_ID).map(|(i, _)| i);
        let first = masks
            .next()
            .ok_or_else(|| Error::Argument("input contains no [MASK] token".into()))?;
        if masks.next().is_some() {
            return Err(Error::Argument("input contains more than one [MASK] token".into()));
        }
        Ok(Self {
            mask_position: prompt.rows() + first,
            prompt,
            tokens,
        })
    }

    pub fn prompt(&self) -> &Matrix {
        &self.prompt
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    /// Index of the mask within the full sequence (prompt rows first).
    pub fn mask_position(&self) -> usize {
        self.mask_position
    }

    pub fn len(&self) -> usize {
        self.prompt.rows() + self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ModelMetadata {
    kind: String,
    config: ModelConfig,
    vocabulary: Vocabulary,
    rng: RngRecord,
    #[serde(default)]
    pretrain: Option<PretrainSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrozenModel {
    vocab: Vocabulary,
    config: ModelConfig,
    params: Params,
    rng: RngRecord,
    summary: Option<PretrainSummary>,
    provenance: Option<serde_json::Value>,
    frozen: bool,
}

impl FrozenModel {
    /// A randomly initialised, not yet frozen model.
    pub fn initialize(vocab: Vocabulary, config: ModelConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let record = rng.record();
        let params = Params::init(&config, vocab.len(), rng)?;
        Ok(Self {
            vocab,
            config,
            params,
            rng: record,
            summary: None,
            provenance: None,
            frozen: false,
        })
    }

    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    /// RNG algorithm and seed that produced the initial weights.
    pub fn rng_record(&self) -> &RngRecord {
        &self.rng
    }

    pub fn pretrain_summary(&self) -> Option<&PretrainSummary> {
        self.summary.as_ref()
    }

    pub fn parameter_names(&self) -> Vec<String> {
        self.params.named().into_iter().map(|(n, _)| n).collect()
    }

    pub fn parameter(&self, name: &str) -> Option<&Matrix> {
        self.params.named().into_iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.named().iter().map(|(_, m)| m.len()).sum()
    }

    /// Replaces one parameter tensor. Always fails once the model is frozen.
    pub fn set_parameter(&mut self, name: &str, value: Matrix) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen(name.to_string()));
        }
        let mut named = self.params.named_mut();
        let slot = named
            .iter_mut()
            .find(|(n, _)| n == name)
            .ok_or_else(|| Error::Argument(format!("no parameter named {name}")))?;
        if slot.1.shape() != value.shape() {
            return Err(Error::shape(
                "FrozenModel::set_parameter",
                format!("{:?}", slot.1.shape()),
                format!("{:?}", value.shape()),
            ));
        }
        *slot.1 = value;
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> Result<&mut Params> {
        if self.frozen {
            return Err(Error::Frozen("*".into()));
        }
        Ok(&mut self.params)
    }

    /// Free-form run metadata stored with the checkpoint. Not a parameter,
    /// so it may be set on a frozen model.
    pub fn set_provenance(&mut self, value: serde_json::Value) {
        self.provenance = Some(value);
    }

    pub fn provenance(&self) -> Option<&serde_json::Value> {
        self.provenance.as_ref()
    }

    pub(crate) fn set_summary(&mut self, s: PretrainSummary) {
        self.summary = Some(s);
    }

    /// Embedding row of a token id.
    pub fn embedding(&self, id: usize) -> &[f64] {
        self.params.embed.row(id)
    }

    /// Stacks the embedding rows of `ids` into a matrix.
    pub fn embedding_rows(&self, ids: &[usize]) -> Matrix {
        let d = self.config.d_model;
        let mut m = Matrix::zeros(ids.len(), d);
        for (r, &id) in ids.iter().enumerate() {
            m.row_mut(r).copy_from_slice(self.embedding(id));
        }
        m
    }

    fn check(&self, input: &EncodedInput) -> Result<()> {
        if input.prompt.rows() > 0 && input.prompt.cols() != self.config.d_model {
            return Err(Error::shape(
                "FrozenModel::forward",
                format!("prompt width {}", input.prompt.cols()),
                format!("d_model {}", self.config.d_model),
            ));
        }
        if input.len() > self.config.max_len {
            return Err(Error::Argument(format!(
                "input length {} exceeds max_len {}",
                input.len(),
                self.config.max_len
            )));
        }
        if let Some(&bad) = input.tokens.iter().find(|&&t| t >= self.vocab.len()) {
            return Err(Error::Argument(format!("token id {bad} outside vocabulary")));
        }
        Ok(())
    }

    pub(crate) fn embed_input(&self, prompt: &Matrix, tokens: &[usize]) -> (Matrix, Vec<bool>) {
        let d = self.config.d_model;
        let n = prompt.rows();
        let len = n + tokens.len();
        let mut x = Matrix::zeros(len, d);
        let mut valid = vec![true; len];
        for r in 0..n {
            x.row_mut(r).copy_from_slice(prompt.row(r));
        }
        for (i, &t) in tokens.iter().enumerate() {
            x.row_mut(n + i).copy_from_slice(self.params.embed.row(t));
            valid[n + i] = t != Vocabulary::PAD_ID;
        }
        for r in 0..len {
            let pos = self.params.pos.row(r);
            for (v, p) in x.row_mut(r).iter_mut().zip(pos) {
                *v += p;
            }
        }
        (x, valid)
    }

    /// Final hidden state at the mask position.
    pub fn mask_hidden(&self, input: &EncodedInput) -> Result<Vec<f64>> {
        self.check(input)?;
        let (x, valid) = self.embed_input(&input.prompt, &input.tokens);
        Ok(transformer::encode_row(&self.params, &self.config, x, &valid, input.mask_position))
    }

    /// Output-head logits over the whole vocabulary at the mask position.
    pub fn forward(&self, input: &EncodedInput) -> Result<Vec<f64>> {
        let h = self.mask_hidden(input)?;
        Ok(transformer::head_logits(&self.params, &h))
    }

    /// Mask logits for the listed token ids only, in that order. Equal to
    /// picking those entries from [`forward`](Self::forward).
    pub fn forward_subset(&self, input: &EncodedInput, ids: &[usize]) -> Result<Vec<f64>> {
        let h = self.mask_hidden(input)?;
        Ok(transformer::head_logits_for(&self.params, &h, ids))
    }

    /// SHA-256 over every parameter record, hex encoded.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for (name, m) in self.params.named() {
            h.update(name.as_bytes());
            for v in m.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn metadata(&self) -> ModelMetadata {
        ModelMetadata {
            kind: "frozen_model".into(),
            config: self.config,
            vocabulary: self.vocab.clone(),
            rng: self.rng.clone(),
            pretrain: self.summary.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn to_record_file(&self) -> RecordFile {
        let meta = serde_json::to_value(self.metadata()).expect("metadata serializes");
        let mut f = RecordFile::new(meta);
        for (name, m) in self.params.named() {
            f.push(name, m.clone());
        }
        f
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_record_file().to_bytes()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_record_file().save(path)
    }

    /// Loads a checkpoint; the result is always frozen.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let file = RecordFile::from_bytes(bytes)?;
        let meta: ModelMetadata = serde_json::from_value(file.metadata).map_err(|e| Error::Format(format!("model metadata: {e}")))?;
        if meta.kind != "frozen_model" {
            return Err(Error::Format(format!("not a model checkpoint (kind {})", meta.kind)));
        }
        meta.config.validate().map_err(|e| Error::Format(e.to_string()))?;
        let mut rng = RngStream::new(0);
        let template = Params::init(&meta.config, meta.vocabulary.len(), &mut rng)?;
        let params = Params::from_records(template, file.records)?;
        Ok(Self {
            vocab: meta.vocabulary,
            config: meta.config,
            params,
            rng: meta.rng,
            summary: meta.pretrain,
            provenance: meta.provenance,
            frozen: true,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
