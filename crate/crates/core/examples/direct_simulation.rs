//! Direct simulation of a binary branching process by thinning.
//!
//! Runs replicas of the pure-birth model with unit rate, compares the mean
//! population size with `N0 exp(B (m - 1) t)`, then writes one trajectory as
//! JSON lines and replays it.
//!
//! ```bash
//! cargo run --release --example direct_simulation
//! ```

use spinal::estimator::{EstimatorConfig, MCEstimate};
use spinal::rng::ReplicaRunner;
use spinal::{
    simulate_direct, ConstantRateModel, DirectRunConfig, OffspringLaw, Population,
    RecordMode, Trajectory,
};

fn main() -> spinal::Result<()> {
    let model = ConstantRateModel::new(1.0, OffspringLaw::fixed(2))?;
    let initial = Population::from_scalars(0.0, &[0.0]);
    let horizon = 2.0;
    let est = EstimatorConfig::new(horizon, 10_000, 7);

    let sizes = ReplicaRunner::new(est.seed).run(est.replicas, |i, _| {
        let cfg = est.run_config(i, RecordMode::TerminalOnly);
        Ok(simulate_direct(&initial, &model, &cfg)?.terminal.len() as f64)
    })?;
    let mean = MCEstimate::from_samples(&sizes)?;
    println!(
        "mean size at t = {horizon}: {:.4} ± {:.4} (exact {:.4})",
        mean.mean,
        mean.std_error,
        model.mean_size(1, horizon)
    );

    let cfg = DirectRunConfig::new(horizon, 7).with_stream(3);
    let traj = simulate_direct(&initial, &model, &cfg)?;
    let text = traj.to_jsonl_string();
    let back = Trajectory::read_jsonl(text.as_bytes())?;
    let replayed = back.replay(&model)?;
    println!(
        "replica 3: {} events, {} lines of JSONL, replay matches terminal: {}",
        traj.n_events,
        text.lines().count(),
        replayed == traj.terminal
    );
    for e in traj.events.iter().take(5) {
        println!("  t = {:.4}  parent {}  -> {} children", e.time, e.parent, e.n_children);
    }
    Ok(())
}
