use rand::{Rng, RngCore};

use crate::model::{BranchingModel, OffspringLaw};
use crate::population::{Marginal, Population, TraitPoint};

use super::params::YuleParams;

/// The Yule model with competition as a generic branching model. Division is
/// the `n = 2` branching and mass loss the `n = 1` branching.
#[derive(Clone, Debug)]
pub struct YuleModel {
    params: YuleParams,
}

pub fn yule_model(params: YuleParams) -> YuleModel {
    YuleModel { params }
}

impl YuleModel {
    pub fn new(params: YuleParams) -> Self {
        YuleModel { params }
    }

    pub fn params(&self) -> &YuleParams {
        &self.params
    }

    /// Total event rate `r(t) ⟨ν, id⟩ + d(t) ⟨ν, 1⟩²`.
    pub fn population_rate(&self, nu: Marginal<'_>, t: f64) -> f64 {
        let s = nu.size() as f64;
        self.params.r.value(t) * nu.total_mass() + self.params.d.value(t) * s * s
    }
}

impl BranchingModel for YuleModel {
    fn dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &TraitPoint, _nu: Marginal<'_>, t: f64) -> TraitPoint {
        x.scaled(self.params.mu.value(t))
    }

    fn total_rate(&self, x: &TraitPoint, nu: Marginal<'_>, t: f64) -> f64 {
        self.params.r.value(t) * x.value() + self.params.d.value(t) * nu.size() as f64
    }

    fn offspring_law(&self, x: &TraitPoint, nu: Marginal<'_>, t: f64) -> OffspringLaw {
        let div = self.params.r.value(t) * x.value();
        let loss = self.params.d.value(t) * nu.size() as f64;
        let b = div + loss;
        if b <= 0.0 {
            return OffspringLaw::fixed(2);
        }
        OffspringLaw::two_point((1, loss / b), (2, div / b))
    }

    fn sample_offspring(&self, n: usize, x: &TraitPoint, _nu: Marginal<'_>, _t: f64, rng: &mut dyn RngCore) -> Vec<TraitPoint> {
        let x = x.value();
        match n {
            2 => {
                let l = self.params.division.inverse_cdf(rng.random::<f64>());
                vec![TraitPoint::scalar(l * x), TraitPoint::scalar((1.0 - l) * x)]
            }
            1 => vec![TraitPoint::scalar(self.params.loss.inverse_cdf(rng.random::<f64>()) * x)],
            _ => unreachable!("Yule individuals branch into one or two children"),
        }
    }

    fn rate_bound(&self, pop: &Population, t0: f64, t1: f64) -> f64 {
        let p = &self.params;
        let growth = (p.mu.sup(t0, t1).max(0.0) * (t1 - t0)).exp();
        let s = pop.len() as f64;
        p.r.sup(t0, t1) * pop.marginal().total_mass() * growth + p.d.sup(t0, t1) * s * s
    }

    fn mean_offspring_bound(&self, _pop: &Population, _t0: f64, _t1: f64) -> f64 {
        2.0
    }

    fn flow_closed_form(&self, traits: &[TraitPoint], t0: f64, t1: f64) -> Option<Vec<TraitPoint>> {
        let k = self.params.mu.integral(t0, t1).exp();
        Some(traits.iter().map(|x| x.scaled(k)).collect())
    }

    fn kernel_dim(&self, n: usize) -> Option<usize> {
        matches!(n, 1 | 2).then_some(1)
    }

    fn kernel_density(&self, n: usize, _x: &TraitPoint, _nu: Marginal<'_>, _t: f64, u: &[f64]) -> f64 {
        match n {
            2 => self.params.division.density(u[0]),
            1 => self.params.loss.density(u[0]),
            _ => 0.0,
        }
    }

    fn kernel_children(&self, n: usize, x: &TraitPoint, _nu: Marginal<'_>, _t: f64, u: &[f64]) -> Vec<TraitPoint> {
        let x = x.value();
        match n {
            2 => vec![TraitPoint::scalar(u[0] * x), TraitPoint::scalar((1.0 - u[0]) * x)],
            1 => vec![TraitPoint::scalar(u[0] * x)],
            _ => unreachable!("Yule individuals branch into one or two children"),
        }
    }

    fn mass_conservative(&self) -> bool {
        true
    }

    fn in_domain(&self, x: &TraitPoint) -> bool {
        x.value() > 0.0 && x.value().is_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn model() -> YuleModel {
        yule_model(YuleParams::constant(1.0, 0.1, 0.0, (2.0, 2.0), (2.0, 1.0)).unwrap())
    }

    #[test]
    fn divisions_conserve_mass() {
        let m = model();
        let pop = Population::from_scalars(0.0, &[1.7]);
        let mut rng = stream_rng(5, 0);
        for _ in 0..1000 {
            let c = m.sample_offspring(2, &pop.traits()[0], pop.marginal(), 0.0, &mut rng);
            assert!(((c[0].value() + c[1].value()) - 1.7).abs() <= 1.7 * 1e-15);
            let l = m.sample_offspring(1, &pop.traits()[0], pop.marginal(), 0.0, &mut rng);
            assert!(l[0].value() < 1.7);
        }
    }

    #[test]
    fn population_rate_formula() {
        let m = model();
        let pop = Population::from_scalars(0.0, &[1.0, 2.0, 0.5]);
        let direct: f64 = pop.traits().iter().map(|x| m.total_rate(x, pop.marginal(), 0.0)).sum();
        assert!((direct - (3.5 + 0.1 * 9.0)).abs() < 1e-14);
        assert!((m.population_rate(pop.marginal(), 0.0) - direct).abs() < 1e-14);
        let law = m.offspring_law(&pop.traits()[1], pop.marginal(), 0.0);
        assert!((law.prob(2) - 2.0 / 2.3).abs() < 1e-15);
    }
}
