//! Trained vectors on disk. Projections are not stored; they are redrawn from
//! the run seed and checked against the digest recorded at save time.

use std::path::Path;

use serde_json::json;
use sha2::{Digest, Sha256};

use super::{CtptAssembly, Pipeline, PromptState, RunTag, TaskBundle};
use crate::error::{Error, Result};
use crate::frozen_model::RecordFile;
use crate::numerics::{Matrix, RngStream};
use crate::prompt_engine::SubspaceProjection;

pub fn projection_digest(p: &SubspaceProjection) -> String {
    let mut h = Sha256::new();
    for v in p.matrix().data().iter().chain(p.offset()) {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn meta_str<'a>(file: &'a RecordFile, key: &str) -> Result<&'a str> {
    file.metadata[key]
        .as_str()
        .ok_or_else(|| Error::Format(format!("artifact metadata lacks {key:?}")))
}

fn expect_kind(file: &RecordFile, kind: &str) -> Result<()> {
    let found = meta_str(file, "kind")?;
    if found != kind {
        return Err(Error::Format(format!("expected a {kind} artifact, found {found}")));
    }
    Ok(())
}

fn check_digest(file: &RecordFile, key: &str, p: &SubspaceProjection) -> Result<()> {
    if meta_str(file, key)? != projection_digest(p) {
        return Err(Error::Format(format!(
            "{key} does not match the projection drawn for this seed; was the artifact produced with another seed or config?"
        )));
    }
    Ok(())
}

pub fn save_task_prompt(bundle: &TaskBundle, tag: &RunTag, path: &Path) -> Result<()> {
    let (state, z) = match bundle.prompt_state() {
        PromptState::Trained(z) => ("trained", z),
        PromptState::ZeroBudget(z) => ("zero_budget", z),
        PromptState::Untrained => return Err(Error::Training(format!("task {} has no prompt to save", bundle.id()))),
    };
    let mut file = RecordFile::new(json!({
        "kind": "task_prompt",
        "task": bundle.id(),
        "state": state,
        "seed": tag.seed,
        "fingerprint": tag.fingerprint,
        "projection": projection_digest(bundle.projection()),
    }));
    file.push("z", Matrix::row_vector(z.clone()));
    file.save(path)
}

impl Pipeline<'_> {
    /// Restores a task prompt saved by [`save_task_prompt`] into `bundle`.
    pub fn load_task_prompt(&self, bundle: &mut TaskBundle, path: &Path) -> Result<()> {
        let mut file = RecordFile::load(path)?;
        expect_kind(&file, "task_prompt")?;
        let task = meta_str(&file, "task")?;
        if task != bundle.id() {
            return Err(Error::Format(format!(
                "{} holds the prompt of {task}, not {}",
                path.display(),
                bundle.id()
            )));
        }
        check_digest(&file, "projection", bundle.projection())?;
        let zero = meta_str(&file, "state")? == "zero_budget";
        let z = file.take("z")?.into_vec();
        self.restore_prompt(bundle, z.clone())?;
        if zero {
            bundle.set_prompt(PromptState::ZeroBudget(z));
        }
        Ok(())
    }

    /// Redraws the projections of a saved assembly and restores its vectors.
    pub fn load_assembly(&self, path: &Path, rng: &RngStream) -> Result<CtptAssembly> {
        let mut file = RecordFile::load(path)?;
        expect_kind(&file, "ctpt_assembly")?;
        let target = meta_str(&file, "target")?.to_string();
        let sources: Vec<String> =
            serde_json::from_value(file.metadata["sources"].clone()).map_err(|e| Error::Format(format!("assembly sources: {e}")))?;
        let meta = file.metadata.clone();
        let flag = |k: &str| meta[k].as_bool().unwrap_or(false);
        let (force, zero_shot, ek) = (flag("force_gate_ones"), flag("zero_shot"), flag("emotional_knowledge"));
        let label = if zero_shot { "transfer" } else { "ctpt" };
        let mut a = CtptAssembly::initial(
            &target,
            sources,
            self.d(),
            self.n(),
            &self.config.prompt,
            force,
            zero_shot,
            ek,
            &rng.derive(&format!("{label}:{target}")),
        )?;
        check_digest(&file, "attention", &a.attention)?;
        check_digest(&file, "gate", &a.gate)?;
        a.z_attention = file.take("z_attention")?.into_vec();
        a.z_gate = file.take("z_gate")?.into_vec();
        if a.z_attention.len() != a.attention.intrinsic_dim() || a.z_gate.len() != a.gate.intrinsic_dim() {
            return Err(Error::Format(
                "assembly vectors do not match the configured intrinsic dimensions".into(),
            ));
        }
        a.trained = flag("trained");
        Ok(a)
    }
}

pub fn save_assembly(a: &CtptAssembly, tag: &RunTag, path: &Path) -> Result<()> {
    let mut file = RecordFile::new(json!({
        "kind": "ctpt_assembly",
        "target": a.target,
        "sources": a.sources,
        "heads": a.heads,
        "force_gate_ones": a.force_gate_ones,
        "zero_shot": a.zero_shot,
        "emotional_knowledge": a.emotional_knowledge,
        "trained": a.trained,
        "seed": tag.seed,
        "fingerprint": tag.fingerprint,
        "attention": projection_digest(&a.attention),
        "gate": projection_digest(&a.gate),
    }));
    file.push("z_attention", Matrix::row_vector(a.z_attention.clone()));
    file.push("z_gate", Matrix::row_vector(a.z_gate.clone()));
    file.save(path)
}
