//! A user-defined model with competition in the drift.
//!
//! Cells grow at rate `g x (1 - N / K)`, divide at rate `x` into two parts
//! with a uniform fraction and die at rate `c`. The weight `ψ = x_e` is
//! handled by the quadrature-backed weight function, and its spine estimate
//! of the expected total mass is checked against direct simulation.
//!
//! ```bash
//! cargo run --release --example custom_model
//! ```

use rand::{Rng, RngCore};
use spinal::estimator::{direct_estimate, many_to_one_estimate, EstimatorConfig};
use spinal::weight::QuadratureWeight;
use spinal::{BranchingModel, Label, Marginal, OffspringLaw, Population, TraitPoint, UnitWeight};

struct Cells {
    g: f64,
    k: f64,
    c: f64,
}

impl BranchingModel for Cells {
    fn dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &TraitPoint, nu: Marginal<'_>, _t: f64) -> TraitPoint {
        TraitPoint::scalar(self.g * x.value() * (1.0 - nu.size() as f64 / self.k))
    }

    fn total_rate(&self, x: &TraitPoint, _nu: Marginal<'_>, _t: f64) -> f64 {
        x.value() + self.c
    }

    fn offspring_law(&self, x: &TraitPoint, _nu: Marginal<'_>, _t: f64) -> OffspringLaw {
        let p0 = self.c / (x.value() + self.c);
        OffspringLaw::from_pairs(&[(0, p0), (2, 1.0 - p0)]).expect("valid law")
    }

    fn sample_offspring(&self, n: usize, x: &TraitPoint, _nu: Marginal<'_>, _t: f64, rng: &mut dyn RngCore) -> Vec<TraitPoint> {
        match n {
            0 => Vec::new(),
            _ => {
                let u: f64 = rng.random();
                vec![x.scaled(u), x.scaled(1.0 - u)]
            }
        }
    }

    fn rate_bound(&self, pop: &Population, t0: f64, t1: f64) -> f64 {
        let growth = (self.g.max(0.0) * (t1 - t0)).exp();
        pop.integral(TraitPoint::value) * growth + self.c * pop.len() as f64
    }

    fn mean_offspring_bound(&self, _pop: &Population, _t0: f64, _t1: f64) -> f64 {
        2.0
    }

    fn kernel_dim(&self, n: usize) -> Option<usize> {
        match n {
            0 => Some(0),
            2 => Some(1),
            _ => None,
        }
    }

    fn kernel_density(&self, _n: usize, _x: &TraitPoint, _nu: Marginal<'_>, _t: f64, _u: &[f64]) -> f64 {
        1.0
    }

    fn kernel_children(&self, n: usize, x: &TraitPoint, _nu: Marginal<'_>, _t: f64, u: &[f64]) -> Vec<TraitPoint> {
        match n {
            0 => Vec::new(),
            _ => vec![x.scaled(u[0]), x.scaled(1.0 - u[0])],
        }
    }

    fn mass_conservative(&self) -> bool {
        true
    }

    fn in_domain(&self, x: &TraitPoint) -> bool {
        x.value() > 0.0
    }
}

fn main() -> spinal::Result<()> {
    let model = Cells { g: 1.0, k: 20.0, c: 0.3 };
    let weight = QuadratureWeight::mass();
    weight.check_model(&model, &[0, 2])?;
    let z = Population::from_scalars(0.0, &[1.0, 0.5]);
    let cfg = EstimatorConfig::new(1.0, 4_000, 17);
    let one = |_: &Label, _: &Population| 1.0;

    let spine = many_to_one_estimate(&model, &weight, &z, &cfg, &one)?;
    let direct = direct_estimate(&model, &weight, &z, &cfg, &one)?;
    let size = direct_estimate(&model, &UnitWeight, &z, &cfg, &one)?;
    println!("E[total mass at t = 1]: spine {:.4} ± {:.4}, direct {:.4} ± {:.4}", spine.mean, spine.std_error, direct.mean, direct.std_error);
    println!("E[population size at t = 1]: {:.4} ± {:.4}", size.mean, size.std_error);
    println!("95% intervals overlap: {}", spine.ci_overlaps(&direct));
    Ok(())
}
