//! Spine estimates of population functionals against direct simulation.
//!
//! With `ψ ≡ 1` the spine estimator of `E[Σ_u f(u)]` is compared with the
//! direct average for a critical and a supercritical constant-rate model. On
//! the Yule model the mean population size is recovered from spine runs by
//! dividing the functional by `ψ`.
//!
//! ```bash
//! cargo run --release --example many_to_one
//! ```

use spinal::estimator::{direct_estimate, many_to_one_estimate, EstimatorConfig};
use spinal::yule::{yule_model, yule_weight, YuleParams};
use spinal::{ConstantRateModel, Label, OffspringLaw, Population, UnitWeight, WeightFunction};

fn main() -> spinal::Result<()> {
    let cfg = EstimatorConfig::new(1.0, 20_000, 5);
    let one = |_: &Label, _: &Population| 1.0;

    for (name, law) in [
        ("critical p0 = p2 = 1/2", OffspringLaw::from_pairs(&[(0, 0.5), (2, 0.5)])?),
        ("supercritical p1 = p3 = 1/2", OffspringLaw::from_pairs(&[(1, 0.5), (3, 0.5)])?),
    ] {
        let model = ConstantRateModel::new(1.0, law)?;
        let z = Population::from_scalars(0.0, &[0.0; 4]);
        let spine = many_to_one_estimate(&model, &UnitWeight, &z, &cfg, &one)?;
        let direct = direct_estimate(&model, &UnitWeight, &z, &cfg, &one)?;
        println!(
            "{name}: spine {:.4} ± {:.4}, direct {:.4} ± {:.4}, exact {:.4}",
            spine.mean,
            spine.std_error,
            direct.mean,
            direct.std_error,
            model.mean_size(4, 1.0)
        );
    }

    let params = YuleParams::constant(1.0, 0.1, 0.0, (2.0, 2.0), (2.0, 1.0))?;
    let (model, weight) = (yule_model(params.clone()), yule_weight(params));
    let z = Population::from_scalars(0.0, &[1.0, 1.0, 1.0]);
    let w = weight.clone();
    let size = move |u: &Label, pop: &Population| {
        let x = pop.trait_of(u).expect("spine is alive");
        1.0 / w.psi(x, pop.marginal(), pop.time())
    };
    let spine = many_to_one_estimate(&model, &weight, &z, &cfg, &size)?;
    let direct = direct_estimate(&model, &UnitWeight, &z, &cfg, &one)?;
    println!(
        "Yule mean size: spine {:.4} ± {:.4}, direct {:.4} ± {:.4}",
        spine.mean, spine.std_error, direct.mean, direct.std_error
    );
    Ok(())
}
