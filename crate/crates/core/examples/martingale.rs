//! The additive martingale `W_t(ψ)` recomputed from direct trajectories.
//!
//! Its expectation stays at `⟨z, ψ(·, z, 0)⟩` for every `t`; the example
//! prints the Monte Carlo estimates on a grid of times for the Yule weight.
//!
//! ```bash
//! cargo run --release --example martingale
//! ```

use spinal::estimator::{martingale_estimates, EstimatorConfig};
use spinal::spine::ln_psi_mass;
use spinal::yule::{yule_model, yule_weight, YuleParams};
use spinal::Population;

fn main() -> spinal::Result<()> {
    let params = YuleParams::constant(1.0, 0.1, 0.0, (2.0, 2.0), (2.0, 1.0))?;
    let (model, weight) = (yule_model(params.clone()), yule_weight(params));
    let z = Population::from_scalars(0.0, &[1.0, 1.0]);
    let target = ln_psi_mass(&weight, &z).exp();
    let times = [0.25, 0.5, 0.75, 1.0];
    let cfg = EstimatorConfig::new(1.0, 10_000, 21);
    let estimates = martingale_estimates(&model, &weight, &z, &cfg, &times)?;
    println!("⟨z, ψ⟩ = {target:.6}");
    for (t, e) in times.iter().zip(&estimates) {
        println!(
            "t = {t:<5} E[W_t] ≈ {:.6} ± {:.6}  ({:+.2} SE)",
            e.mean,
            e.std_error,
            (e.mean - target) / e.std_error
        );
    }
    Ok(())
}
