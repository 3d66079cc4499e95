//! The spine process of the Yule model with competition.
//!
//! Under the Yule weight every individual divides at rate 1 and the spinal
//! individual follows one child at each of its divisions. Prints the spine
//! path, the accumulated log-weight and the Girsanov weight of the run.
//!
//! ```bash
//! cargo run --release --example spine_simulation
//! ```

use spinal::yule::{yule_model, yule_weight, YuleParams};
use spinal::{simulate_spine, DirectRunConfig, Population, RecordMode};

fn main() -> spinal::Result<()> {
    let params = YuleParams::constant(1.0, 0.1, 0.0, (2.0, 2.0), (2.0, 1.0))?;
    let model = yule_model(params.clone());
    let weight = yule_weight(params);
    let initial = Population::from_scalars(0.0, &[1.0, 1.0, 1.0]);
    let cfg = DirectRunConfig::new(1.0, 11).with_record_mode(RecordMode::FullTrajectory);

    let traj = simulate_spine(&initial, &model, &weight, &cfg)?;
    println!("{} events, {} individuals at the horizon", traj.n_events, traj.terminal.population().len());
    println!("spine path:");
    for mark in &traj.spine_history {
        println!(
            "  t = {:.4}  label {:<10} mass {:.4}  ({} children)",
            mark.time,
            mark.label.to_string(),
            mark.trait_value.value(),
            mark.n_children
        );
    }
    println!("divisions along the spine: {}", traj.spine_division_depth());
    println!("log-weight ∫ 𝒢ψ/ψ = {:.6}", traj.log_weight);
    println!("ln ψ at the horizon = {:.6}", traj.ln_terminal_psi);
    println!(
        "ξ for uniform sampling = {:.6e}",
        (traj.log_weight - traj.ln_terminal_psi - (traj.terminal.population().len() as f64).ln()).exp()
    );
    Ok(())
}
