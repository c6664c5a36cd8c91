//! CMA-ES on the sphere and Rosenbrock functions, once through `minimize`
//! and once through the ask/tell loop.

use ctpt::cmaes::{minimize, CmaesState};
use ctpt::numerics::RngStream;

fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

fn main() -> ctpt::Result<()> {
    let mut rng = RngStream::new(1);
    let mut state = CmaesState::new(20, vec![3.0; 20], 1.0, None)?;
    let trace = minimize(&mut state, &mut rng, 5_000, 1e-8, sphere)?;
    println!(
        "sphere d=20: best {:.3e} after {} evaluations ({} generations, lambda {})",
        state.best_loss(),
        state.evaluations(),
        trace.len(),
        state.population_size()
    );

    // Five-dimensional Rosenbrock has a local minimum near x₁ = -1; restart
    // from the origin with a fresh draw whenever the step size collapses.
    let mut spent = 0;
    let mut restarts = 0;
    loop {
        let mut state = CmaesState::new(5, vec![0.0; 5], 0.5, None)?;
        while spent + state.evaluations() < 50_000 && state.best_loss() > 1e-4 && state.sigma() > 1e-12 {
            let mut batch = state.ask(&mut rng)?;
            batch.evaluate_with(rosenbrock);
            state.tell(batch)?;
            if state.generation() % 100 == 0 {
                println!(
                    "  generation {:4}: best {:.3e}, sigma {:.3e}",
                    state.generation(),
                    state.best_loss(),
                    state.sigma()
                );
            }
        }
        spent += state.evaluations();
        let (x, f) = state.best().expect("at least one generation");
        if f <= 1e-4 || spent >= 50_000 {
            println!("rosenbrock d=5: best {f:.3e} at {x:.4?} after {spent} evaluations, {restarts} restarts");
            break;
        }
        println!("  stalled at {f:.3e}, restarting");
        restarts += 1;
    }
    Ok(())
}
