//! Weight functions `ψ(x_e, ν, t)` that drive the spinal change of measure.
//!
//! Given a weight function, the spine process tilts each branching rate by a
//! normalizer ratio: an individual outside the spine with `n` children
//! branches at rate `B_n Γ̂_n / ψ`, the spinal individual at `B_n Γ̂*_n / ψ`.

use std::sync::Arc;

use rand::{Rng, RngCore};

use crate::error::{Result, SpinalError};
use crate::model::BranchingModel;
use crate::population::{Marginal, Population, TraitPoint};
use crate::quadrature::GaussLegendre;

/// Attempt cap for the rejection samplers of biased kernels.
pub const REJECTION_CAP: usize = 1_000_000;

pub trait WeightFunction: Send + Sync {
    /// `ln ψ(x_e, ν, t)`.
    fn ln_psi(&self, x_e: &TraitPoint, nu: Marginal<'_>, t: f64) -> f64;

    fn psi(&self, x_e: &TraitPoint, nu: Marginal<'_>, t: f64) -> f64 {
        self.ln_psi(x_e, nu, t).exp()
    }

    /// `Gψ/ψ`: time derivative of `ln ψ` along the deterministic flow, with
    /// the spinal individual at index `spine` of `nu`.
    ///
    /// The default is a central difference along the drift field.
    fn flow_log_derivative(&self, model: &dyn BranchingModel, spine: usize, nu: Marginal<'_>, t: f64) -> f64 {
        let h = 1e-5 * t.abs().max(1.0);
        let drifts: Vec<TraitPoint> = nu.iter().map(|x| model.drift(x, nu, t)).collect();
        let shift = |k: f64| -> f64 {
            let moved: Vec<TraitPoint> =
                nu.iter().zip(&drifts).map(|(x, v)| x.add_scaled(k * h, v)).collect();
            self.ln_psi(&moved[spine], Marginal::new(&moved), t + k * h)
        };
        (shift(1.0) - shift(-1.0)) / (2.0 * h)
    }

    /// Closed form of `𝒢ψ/ψ`, when available.
    fn g_ratio_closed(&self, _model: &dyn BranchingModel, _spine: usize, _nu: Marginal<'_>, _t: f64) -> Option<f64> {
        None
    }

    /// Closed form of `∫_{t0}^{t1} 𝒢ψ/ψ ds` over an event-free stretch that
    /// starts from `pop` at `t0 = pop.time()`.
    fn log_weight_closed(&self, _model: &dyn BranchingModel, _spine: usize, _pop: &Population, _t1: f64) -> Option<f64> {
        None
    }

    /// `Γ̂_n / ψ` for a branching individual at index `parent ≠ spine`.
    fn outside_ratio(
        &self,
        model: &dyn BranchingModel,
        spine: usize,
        parent: usize,
        nu: Marginal<'_>,
        t: f64,
        n: usize,
    ) -> Result<f64>;

    /// `Γ̂*_n / ψ` for the spinal individual at index `spine`.
    fn spine_ratio(&self, model: &dyn BranchingModel, spine: usize, nu: Marginal<'_>, t: f64, n: usize) -> Result<f64>;

    /// Children from the biased kernel `K̂_n` of an individual outside the spine.
    #[allow(clippy::too_many_arguments)]
    fn sample_outside(
        &self,
        model: &dyn BranchingModel,
        spine: usize,
        parent: usize,
        nu: Marginal<'_>,
        t: f64,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<TraitPoint>>;

    /// Children from the biased kernel `K̂*_n` of the spinal individual. The
    /// choice of the new spinal child is left to the engine.
    fn sample_spine(
        &self,
        model: &dyn BranchingModel,
        spine: usize,
        nu: Marginal<'_>,
        t: f64,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<TraitPoint>>;

    /// Upper bound on the total biased rate `τ̂_tot` over `[t0, t1]` along the
    /// flow started from `pop` at `t0`.
    fn tilted_rate_bound(&self, model: &dyn BranchingModel, pop: &Population, spine: usize, t0: f64, t1: f64) -> f64;
}

/// `ψ ≡ 1`: individuals outside the spine are unbiased, the spine branches
/// with the size-biased law `n p_n / m` and picks a uniform child.
#[derive(Clone, Copy, Debug, Default)]
pub struct UnitWeight;

impl WeightFunction for UnitWeight {
    fn ln_psi(&self, _x_e: &TraitPoint, _nu: Marginal<'_>, _t: f64) -> f64 {
        0.0
    }

    fn flow_log_derivative(&self, _model: &dyn BranchingModel, _spine: usize, _nu: Marginal<'_>, _t: f64) -> f64 {
        0.0
    }

    fn g_ratio_closed(&self, model: &dyn BranchingModel, spine: usize, nu: Marginal<'_>, t: f64) -> Option<f64> {
        let x = &nu.traits()[spine];
        Some(model.total_rate(x, nu, t) * (model.offspring_law(x, nu, t).mean() - 1.0))
    }

    fn outside_ratio(&self, _m: &dyn BranchingModel, _s: usize, _p: usize, _nu: Marginal<'_>, _t: f64, _n: usize) -> Result<f64> {
        Ok(1.0)
    }

    fn spine_ratio(&self, _m: &dyn BranchingModel, _s: usize, _nu: Marginal<'_>, _t: f64, n: usize) -> Result<f64> {
        Ok(n as f64)
    }

    fn sample_outside(
        &self,
        model: &dyn BranchingModel,
        _spine: usize,
        parent: usize,
        nu: Marginal<'_>,
        t: f64,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<TraitPoint>> {
        Ok(model.sample_offspring(n, &nu.traits()[parent], nu, t, rng))
    }

    fn sample_spine(
        &self,
        model: &dyn BranchingModel,
        spine: usize,
        nu: Marginal<'_>,
        t: f64,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<TraitPoint>> {
        Ok(model.sample_offspring(n, &nu.traits()[spine], nu, t, rng))
    }

    fn tilted_rate_bound(&self, model: &dyn BranchingModel, pop: &Population, _spine: usize, t0: f64, t1: f64) -> f64 {
        model.mean_offspring_bound(pop, t0, t1).max(1.0) * model.rate_bound(pop, t0, t1)
    }
}

type LnPsiFn = dyn Fn(&TraitPoint, Marginal<'_>, f64) -> f64 + Send + Sync;

/// Weight function given only by `ln ψ`. Normalizers are computed by
/// Gauss-Legendre quadrature over the model's kernel parametrisation (of
/// dimension at most 2) and biased children are drawn by rejection from the
/// model's own kernel sampler.
///
/// `outside_bound` must dominate `ψ(x_e, ν₊, t)/ψ(x_e, ν, t)` for every
/// outside branching, and `spine_bound` must dominate `Σ_j ψ(y^j, ν₊, t)/ψ(x_e, ν, t)`
/// for every spinal branching.
#[derive(Clone)]
pub struct QuadratureWeight {
    ln_psi: Arc<LnPsiFn>,
    outside_bound: f64,
    spine_bound: f64,
}

impl std::fmt::Debug for QuadratureWeight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuadratureWeight")
            .field("outside_bound", &self.outside_bound)
            .field("spine_bound", &self.spine_bound)
            .finish_non_exhaustive()
    }
}

impl QuadratureWeight {
    pub fn new<F>(ln_psi: F, outside_bound: f64, spine_bound: f64) -> Self
    where
        F: Fn(&TraitPoint, Marginal<'_>, f64) -> f64 + Send + Sync + 'static,
    {
        QuadratureWeight { ln_psi: Arc::new(ln_psi), outside_bound, spine_bound }
    }

    /// `ψ = |x_e|`, valid for mass-conservative models with bounds 1 and 1.
    pub fn mass() -> Self {
        Self::new(|x, _, _| x.norm_l1().ln(), 1.0, 1.0)
    }

    /// Rejects models whose kernels lack a parametrisation of dimension ≤ 2.
    pub fn check_model(&self, model: &dyn BranchingModel, ns: &[usize]) -> Result<()> {
        for &n in ns {
            kernel_dim(model, n)?;
        }
        Ok(())
    }

    fn outside_log_ratio(&self, x_e: &TraitPoint, nu: Marginal<'_>, parent: usize, children: &[TraitPoint], t: f64, ln_base: f64) -> f64 {
        let plus = nu.replaced(parent, children);
        (self.ln_psi)(x_e, Marginal::new(&plus), t) - ln_base
    }

    fn spine_sum_ratio(&self, nu: Marginal<'_>, spine: usize, children: &[TraitPoint], t: f64, ln_base: f64) -> f64 {
        let plus = nu.replaced(spine, children);
        let m = Marginal::new(&plus);
        children.iter().map(|y| ((self.ln_psi)(y, m, t) - ln_base).exp()).sum()
    }

    fn check_bound(ratio: f64, bound: f64) -> Result<()> {
        if ratio > bound * (1.0 + 1e-12) {
            Err(SpinalError::BiasBoundViolated { ratio, bound })
        } else {
            Ok(())
        }
    }
}

fn kernel_dim(model: &dyn BranchingModel, n: usize) -> Result<usize> {
    match model.kernel_dim(n) {
        Some(k) if k <= 2 => Ok(k),
        Some(k) => Err(SpinalError::UnsupportedKernel(format!("kernel for n = {n} has parameter dimension {k} > 2"))),
        None => Err(SpinalError::UnsupportedKernel(format!("kernel for n = {n} has no parametrisation"))),
    }
}

/// `∫ density(u) h(children(u)) du` over the kernel parameter box.
fn kernel_expectation<H>(model: &dyn BranchingModel, n: usize, x: &TraitPoint, nu: Marginal<'_>, t: f64, mut h: H) -> Result<f64>
where
    H: FnMut(&[TraitPoint]) -> Result<f64>,
{
    let rule = GaussLegendre::standard();
    let value = match kernel_dim(model, n)? {
        0 => h(&model.kernel_children(n, x, nu, t, &[]))?,
        1 => {
            let mut acc = 0.0;
            for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
                let dens = model.kernel_density(n, x, nu, t, &[u]);
                if dens != 0.0 {
                    acc += w * dens * h(&model.kernel_children(n, x, nu, t, &[u]))?;
                }
            }
            acc
        }
        _ => {
            let mut acc = 0.0;
            for (&u, &wu) in rule.nodes.iter().zip(&rule.weights) {
                for (&v, &wv) in rule.nodes.iter().zip(&rule.weights) {
                    let dens = model.kernel_density(n, x, nu, t, &[u, v]);
                    if dens != 0.0 {
                        acc += wu * wv * dens * h(&model.kernel_children(n, x, nu, t, &[u, v]))?;
                    }
                }
            }
            acc
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(SpinalError::NormalizerNonFinite { n, value })
    }
}

impl WeightFunction for QuadratureWeight {
    fn ln_psi(&self, x_e: &TraitPoint, nu: Marginal<'_>, t: f64) -> f64 {
        (self.ln_psi)(x_e, nu, t)
    }

    fn outside_ratio(
        &self,
        model: &dyn BranchingModel,
        spine: usize,
        parent: usize,
        nu: Marginal<'_>,
        t: f64,
        n: usize,
    ) -> Result<f64> {
        let x_e = &nu.traits()[spine];
        let ln_base = (self.ln_psi)(x_e, nu, t);
        let x = &nu.traits()[parent];
        kernel_expectation(model, n, x, nu, t, |children| {
            let r = self.outside_log_ratio(x_e, nu, parent, children, t, ln_base).exp();
            Self::check_bound(r, self.outside_bound)?;
            Ok(r)
        })
    }

    fn spine_ratio(&self, model: &dyn BranchingModel, spine: usize, nu: Marginal<'_>, t: f64, n: usize) -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        let x_e = &nu.traits()[spine];
        let ln_base = (self.ln_psi)(x_e, nu, t);
        kernel_expectation(model, n, x_e, nu, t, |children| {
            let r = self.spine_sum_ratio(nu, spine, children, t, ln_base);
            Self::check_bound(r, self.spine_bound)?;
            Ok(r)
        })
    }

    fn sample_outside(
        &self,
        model: &dyn BranchingModel,
        spine: usize,
        parent: usize,
        nu: Marginal<'_>,
        t: f64,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<TraitPoint>> {
        let x_e = &nu.traits()[spine];
        let ln_base = (self.ln_psi)(x_e, nu, t);
        let x = &nu.traits()[parent];
        for _ in 0..REJECTION_CAP {
            let children = model.sample_offspring(n, x, nu, t, rng);
            let r = self.outside_log_ratio(x_e, nu, parent, &children, t, ln_base).exp();
            Self::check_bound(r, self.outside_bound)?;
            if rng.random::<f64>() * self.outside_bound < r {
                return Ok(children);
            }
        }
        Err(SpinalError::RejectionStall { cap: REJECTION_CAP })
    }

    fn sample_spine(
        &self,
        model: &dyn BranchingModel,
        spine: usize,
        nu: Marginal<'_>,
        t: f64,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<TraitPoint>> {
        let x_e = &nu.traits()[spine];
        let ln_base = (self.ln_psi)(x_e, nu, t);
        for _ in 0..REJECTION_CAP {
            let children = model.sample_offspring(n, x_e, nu, t, rng);
            let r = self.spine_sum_ratio(nu, spine, &children, t, ln_base);
            Self::check_bound(r, self.spine_bound)?;
            if rng.random::<f64>() * self.spine_bound < r {
                return Ok(children);
            }
        }
        Err(SpinalError::RejectionStall { cap: REJECTION_CAP })
    }

    fn tilted_rate_bound(&self, model: &dyn BranchingModel, pop: &Population, _spine: usize, t0: f64, t1: f64) -> f64 {
        self.outside_bound.max(self.spine_bound) * model.rate_bound(pop, t0, t1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstantRateModel, OffspringLaw};
    use crate::rng::stream_rng;

    #[test]
    fn unit_weight_ratios() {
        let model = ConstantRateModel::new(1.5, OffspringLaw::from_pairs(&[(0, 0.5), (2, 0.5)]).unwrap()).unwrap();
        let pop = Population::from_scalars(0.0, &[1.0, 2.0]);
        let nu = pop.marginal();
        assert_eq!(UnitWeight.outside_ratio(&model, 0, 1, nu, 0.0, 0).unwrap(), 1.0);
        assert_eq!(UnitWeight.spine_ratio(&model, 0, nu, 0.0, 2).unwrap(), 2.0);
        assert_eq!(UnitWeight.g_ratio_closed(&model, 0, nu, 0.0), Some(0.0));
    }

    #[test]
    fn quadrature_weight_rejects_unparametrised_kernels() {
        struct Opaque;
        impl BranchingModel for Opaque {
            fn dim(&self) -> usize {
                1
            }
            fn drift(&self, _x: &TraitPoint, _nu: Marginal<'_>, _t: f64) -> TraitPoint {
                TraitPoint::zeros(1)
            }
            fn total_rate(&self, _x: &TraitPoint, _nu: Marginal<'_>, _t: f64) -> f64 {
                1.0
            }
            fn offspring_law(&self, _x: &TraitPoint, _nu: Marginal<'_>, _t: f64) -> OffspringLaw {
                OffspringLaw::fixed(2)
            }
            fn sample_offspring(&self, n: usize, x: &TraitPoint, _nu: Marginal<'_>, _t: f64, _r: &mut dyn RngCore) -> Vec<TraitPoint> {
                vec![x.clone(); n]
            }
            fn rate_bound(&self, p: &Population, _a: f64, _b: f64) -> f64 {
                p.len() as f64
            }
            fn mean_offspring_bound(&self, _p: &Population, _a: f64, _b: f64) -> f64 {
                2.0
            }
        }
        let w = QuadratureWeight::mass();
        assert!(matches!(w.check_model(&Opaque, &[2]), Err(SpinalError::UnsupportedKernel(_))));
        let pop = Population::from_scalars(0.0, &[1.0]);
        assert!(w.spine_ratio(&Opaque, 0, pop.marginal(), 0.0, 2).is_err());
    }

    #[test]
    fn quadrature_unit_psi_matches_unit_weight() {
        let model = ConstantRateModel::new(1.0, OffspringLaw::from_pairs(&[(0, 0.25), (3, 0.75)]).unwrap()).unwrap();
        let w = QuadratureWeight::new(|_, _, _| 0.0, 1.0, 3.0);
        let pop = Population::from_scalars(0.0, &[1.0, 2.0]);
        let nu = pop.marginal();
        assert!((w.spine_ratio(&model, 0, nu, 0.0, 3).unwrap() - 3.0).abs() < 1e-14);
        assert!((w.outside_ratio(&model, 0, 1, nu, 0.0, 0).unwrap() - 1.0).abs() < 1e-14);
        let mut rng = stream_rng(3, 0);
        assert_eq!(w.sample_spine(&model, 0, nu, 0.0, 3, &mut rng).unwrap().len(), 3);
    }

    #[test]
    fn bias_bound_violation_is_reported() {
        let model = ConstantRateModel::new(1.0, OffspringLaw::fixed(2)).unwrap();
        let w = QuadratureWeight::new(|_, _, _| 0.0, 1.0, 1.0);
        let pop = Population::from_scalars(0.0, &[1.0]);
        let err = w.spine_ratio(&model, 0, pop.marginal(), 0.0, 2).unwrap_err();
        assert!(matches!(err, SpinalError::BiasBoundViolated { .. }));
    }
}
