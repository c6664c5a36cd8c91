//! Builds a task prompt from an intrinsic vector, attends over two source
//! prompts and mixes the result through the gate.

use ctpt::numerics::RngStream;
use ctpt::prompt_engine::{
    attention_offsets, attention_weights, cross_task_attend, gate_combine, project_gate, project_prompt, unpack_attention, PromptMatrix,
    SubspaceProjection,
};

fn main() -> ctpt::Result<()> {
    let (n, d, heads) = (4, 8, 2);
    let mut rng = RngStream::new(5);
    let p0: Vec<f64> = (0..n * d).map(|_| rng.normal()).collect();
    let proj = SubspaceProjection::random(&mut rng.derive("task"), p0, 16)?;
    let z: Vec<f64> = (0..16).map(|_| 0.3 * rng.normal()).collect();
    let target = project_prompt(&proj, &z, n, d)?;
    let sources: Vec<PromptMatrix> = (0..2)
        .map(|_| project_prompt(&proj, &(0..16).map(|_| rng.normal()).collect::<Vec<_>>(), n, d))
        .collect::<ctpt::Result<_>>()?;
    let refs: Vec<&PromptMatrix> = sources.iter().collect();

    let offsets = attention_offsets(d, heads, refs.len(), 1.0, 0.01, &mut rng)?;
    let attention = SubspaceProjection::random(&mut rng.derive("attention"), offsets, 12)?;
    let params = unpack_attention(&attention, &[0.0; 12], d, heads)?;
    let weights = attention_weights(&target, refs[0], &params)?;
    println!("head 0 weights of target row 0 over source 0: {:.3?}", weights[0].row(0));
    let pc = cross_task_attend(&target, &refs, &params)?;

    let gate = SubspaceProjection::random(&mut rng.derive("gate"), vec![0.0; n], n)?;
    for scale in [0.0, 2.0, 8.0] {
        let zg = vec![scale; n];
        let g = project_gate(&gate, &zg)?;
        let mixed = gate_combine(&g, &target, &pc)?;
        let to_task = mixed.values().max_abs_diff(target.values())?;
        println!("gate {:.3?}: distance to task prompt {to_task:.4}", g.values());
    }
    Ok(())
}
