use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::prompt_engine::{
    attention_offsets, cross_task_attend, gate_combine, project_gate, unpack_attention, GateVector, PromptMatrix, SubspaceProjection,
};

/// Trained cross-task stage: attention and gate subspaces with their vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtptAssembly {
    pub target: String,
    pub sources: Vec<String>,
    pub attention: SubspaceProjection,
    pub gate: SubspaceProjection,
    pub z_attention: Vec<f64>,
    pub z_gate: Vec<f64>,
    pub heads: usize,
    pub force_gate_ones: bool,
    /// Query is `p₀` instead of the target's task prompt.
    pub zero_shot: bool,
    pub emotional_knowledge: bool,
    pub trained: bool,
}

impl CtptAssembly {
    /// Draws the attention and gate projections with `z′ = 0`, `z″ = 0`.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn initial(
        target: &str,
        sources: Vec<String>,
        d: usize,
        n: usize,
        prompt: &super::PromptConfig,
        force_gate_ones: bool,
        zero_shot: bool,
        emotional_knowledge: bool,
        rng: &RngStream,
    ) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::Argument(format!(
                "cross-task stage for {target} needs at least one source task"
            )));
        }
        let offsets = attention_offsets(
            d,
            prompt.heads,
            sources.len(),
            prompt.attention_anchor,
            prompt.attention_noise,
            &mut rng.derive("w0"),
        )?;
        let attention = SubspaceProjection::random(&mut rng.derive("attention"), offsets, prompt.attention_dim)?;
        let g0 = if zero_shot {
            prompt.transfer_gate_offset
        } else {
            prompt.gate_offset
        };
        let gate = SubspaceProjection::random(&mut rng.derive("gate"), vec![g0; n], prompt.gate_dim())?;
        Ok(Self {
            target: target.to_string(),
            sources,
            z_attention: vec![0.0; attention.intrinsic_dim()],
            z_gate: vec![0.0; gate.intrinsic_dim()],
            attention,
            gate,
            heads: prompt.heads,
            force_gate_ones,
            zero_shot,
            emotional_knowledge,
            trained: false,
        })
    }

    pub fn learnables(&self) -> usize {
        self.z_attention.len() + self.z_gate.len()
    }

    pub fn gate_values(&self) -> Result<GateVector> {
        self.gate_for(&self.z_gate)
    }

    fn gate_for(&self, z_gate: &[f64]) -> Result<GateVector> {
        if self.force_gate_ones {
            Ok(GateVector::ones(self.gate.target_dim()))
        } else {
            project_gate(&self.gate, z_gate)
        }
    }

    /// `g ⊗ p_t + (1 − g) ⊗ p_c` for explicit intrinsic vectors.
    pub fn combine_with(
        &self,
        z_attention: &[f64],
        z_gate: &[f64],
        query: &PromptMatrix,
        task_prompt: &PromptMatrix,
        sources: &[&PromptMatrix],
    ) -> Result<PromptMatrix> {
        let g = self.gate_for(z_gate)?;
        if g.values().iter().all(|&v| v == 1.0) {
            return Ok(task_prompt.clone());
        }
        let params = unpack_attention(&self.attention, z_attention, query.d(), self.heads)?;
        let pc = cross_task_attend(query, sources, &params)?;
        gate_combine(&g, task_prompt, &pc)
    }

    pub fn combine(&self, query: &PromptMatrix, task_prompt: &PromptMatrix, sources: &[&PromptMatrix]) -> Result<PromptMatrix> {
        self.combine_with(&self.z_attention, &self.z_gate, query, task_prompt, sources)
    }
}
