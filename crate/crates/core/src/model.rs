//! Interacting branching models.
//!
//! An individual with trait `x` in a population `ν` at time `t` drifts with
//! velocity `μ(x, ν, t)`, branches at rate `B(x, ν, t)` into `n` children with
//! probability `p_n(x, ν, t)`, and the children's traits are drawn from the
//! kernel `K_n(x, ν, t, ·)`.

use rand::{Rng, RngCore};
use smallvec::SmallVec;

use crate::error::{Result, SpinalError};
use crate::population::{Marginal, Population, TraitPoint};

/// Sparse law of the number of children, `(n, p_n)` pairs with `p_n > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct OffspringLaw {
    support: SmallVec<[(usize, f64); 4]>,
}

impl OffspringLaw {
    /// Default truncation for tabulated laws.
    pub const DEFAULT_MAX_CHILDREN: usize = 64;
    const SUM_TOLERANCE: f64 = 1e-12;

    /// Point mass at `n`.
    pub fn fixed(n: usize) -> Self {
        OffspringLaw { support: smallvec::smallvec![(n, 1.0)] }
    }

    /// Two-point law, skipping zero-probability atoms. No normalisation check;
    /// callers guarantee `p_a + p_b = 1`.
    pub(crate) fn two_point(a: (usize, f64), b: (usize, f64)) -> Self {
        let mut support = SmallVec::new();
        for atom in [a, b] {
            if atom.1 > 0.0 {
                support.push(atom);
            }
        }
        OffspringLaw { support }
    }

    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self> {
        let mut support: SmallVec<[(usize, f64); 4]> = SmallVec::new();
        for &(n, p) in pairs {
            if !(p >= 0.0 && p.is_finite()) {
                return Err(SpinalError::InvalidOffspringLaw(format!("p_{n} = {p}")));
            }
            if p > 0.0 {
                if support.iter().any(|&(m, _)| m == n) {
                    return Err(SpinalError::InvalidOffspringLaw(format!("duplicate atom {n}")));
                }
                support.push((n, p));
            }
        }
        support.sort_by_key(|&(n, _)| n);
        let total: f64 = support.iter().map(|&(_, p)| p).sum();
        if (total - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(SpinalError::InvalidOffspringLaw(format!("probabilities sum to {total}")));
        }
        Ok(OffspringLaw { support })
    }

    /// Law from a table `probs[n] = p_n`, truncated at `max_children`.
    /// Mass beyond the truncation counts against the normalisation check.
    pub fn from_table(probs: &[f64], max_children: usize) -> Result<Self> {
        let pairs: Vec<(usize, f64)> =
            probs.iter().copied().enumerate().take(max_children + 1).collect();
        Self::from_pairs(&pairs)
    }

    pub fn prob(&self, n: usize) -> f64 {
        self.support.iter().find(|&&(m, _)| m == n).map_or(0.0, |&(_, p)| p)
    }

    pub fn atoms(&self) -> &[(usize, f64)] {
        &self.support
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().map(|&(n, p)| n as f64 * p).sum()
    }

    pub fn max_children(&self) -> usize {
        self.support.iter().map(|&(n, _)| n).max().unwrap_or(0)
    }

    /// Inverse-CDF draw from a uniform `u ∈ [0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for &(n, p) in &self.support {
            acc += p;
            if u < acc {
                return n;
            }
        }
        self.support.last().map_or(0, |&(n, _)| n)
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> usize {
        self.sample_with(rng.random::<f64>())
    }
}

/// A trait-structured branching model with population-wide interactions.
///
/// Only the rate, law, drift and kernel sampler are mandatory. Closed-form
/// flows and kernel parametrisations are optional capabilities that some
/// engines and weight functions use when present.
pub trait BranchingModel: Send + Sync {
    /// Dimension `d` of the trait space.
    fn dim(&self) -> usize;

    /// Trait velocity `μ(x, ν, t)`.
    fn drift(&self, x: &TraitPoint, nu: Marginal<'_>, t: f64) -> TraitPoint;

    /// Total branching rate `B(x, ν, t)`.
    fn total_rate(&self, x: &TraitPoint, nu: Marginal<'_>, t: f64) -> f64;

    /// Offspring-count law `(p_n(x, ν, t))_n`.
    fn offspring_law(&self, x: &TraitPoint, nu: Marginal<'_>, t: f64) -> OffspringLaw;

    /// Draws `n` child traits from `K_n(x, ν, t, ·)`.
    fn sample_offspring(
        &self,
        n: usize,
        x: &TraitPoint,
        nu: Marginal<'_>,
        t: f64,
        rng: &mut dyn RngCore,
    ) -> Vec<TraitPoint>;

    /// Upper bound on `∫ B(x, ν_s, s) ν_s(dx)` for `s ∈ [t0, t1]` when `ν`
    /// follows the deterministic flow from `pop` (at time `t0`) without events.
    fn rate_bound(&self, pop: &Population, t0: f64, t1: f64) -> f64;

    /// Upper bound on the mean offspring number `m(x, ν_s, s)` over the same window.
    fn mean_offspring_bound(&self, pop: &Population, t0: f64, t1: f64) -> f64;

    /// Closed-form flow of all traits from `t0` to `t1`, if the model has one.
    fn flow_closed_form(&self, _traits: &[TraitPoint], _t0: f64, _t1: f64) -> Option<Vec<TraitPoint>> {
        None
    }

    /// Dimension of the parametrisation of `K_n` by `[0, 1]^k`, when the kernel
    /// is the image of a density on the unit box (`k ≤ 2` is supported by the
    /// quadrature-backed weight functions; `Some(0)` means deterministic).
    fn kernel_dim(&self, _n: usize) -> Option<usize> {
        None
    }

    /// Density of the kernel parameter at `u ∈ [0, 1]^k`.
    fn kernel_density(&self, _n: usize, _x: &TraitPoint, _nu: Marginal<'_>, _t: f64, _u: &[f64]) -> f64 {
        0.0
    }

    /// Children traits for the kernel parameter `u`.
    fn kernel_children(
        &self,
        n: usize,
        _x: &TraitPoint,
        _nu: Marginal<'_>,
        _t: f64,
        _u: &[f64],
    ) -> Vec<TraitPoint> {
        panic!("model declares no kernel parametrisation for n = {n}")
    }

    /// Children never carry more total trait mass than the parent.
    fn mass_conservative(&self) -> bool {
        false
    }

    /// Domain predicate checked by engines in validation mode.
    fn in_domain(&self, x: &TraitPoint) -> bool {
        x.is_finite()
    }
}

/// Rate `B` and offspring law independent of traits, population and time.
/// Traits are inert: children copy the parent's trait and nothing drifts.
#[derive(Clone, Debug)]
pub struct ConstantRateModel {
    rate: f64,
    law: OffspringLaw,
}

impl ConstantRateModel {
    pub fn new(rate: f64, law: OffspringLaw) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(SpinalError::InvalidArgument(format!("rate must be finite and >= 0, got {rate}")));
        }
        Ok(ConstantRateModel { rate, law })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn law(&self) -> &OffspringLaw {
        &self.law
    }

    /// `E[⟨ν_t, 1⟩] = N0 exp(B (m - 1) t)`.
    pub fn mean_size(&self, n0: usize, t: f64) -> f64 {
        n0 as f64 * (self.rate * (self.law.mean() - 1.0) * t).exp()
    }
}

impl BranchingModel for ConstantRateModel {
    fn dim(&self) -> usize {
        1
    }

    fn drift(&self, _x: &TraitPoint, _nu: Marginal<'_>, _t: f64) -> TraitPoint {
        TraitPoint::zeros(1)
    }

    fn total_rate(&self, _x: &TraitPoint, _nu: Marginal<'_>, _t: f64) -> f64 {
        self.rate
    }

    fn offspring_law(&self, _x: &TraitPoint, _nu: Marginal<'_>, _t: f64) -> OffspringLaw {
        self.law.clone()
    }

    fn sample_offspring(
        &self,
        n: usize,
        x: &TraitPoint,
        _nu: Marginal<'_>,
        _t: f64,
        _rng: &mut dyn RngCore,
    ) -> Vec<TraitPoint> {
        vec![x.clone(); n]
    }

    fn rate_bound(&self, pop: &Population, _t0: f64, _t1: f64) -> f64 {
        self.rate * pop.len() as f64
    }

    fn mean_offspring_bound(&self, _pop: &Population, _t0: f64, _t1: f64) -> f64 {
        self.law.mean()
    }

    fn flow_closed_form(&self, traits: &[TraitPoint], _t0: f64, _t1: f64) -> Option<Vec<TraitPoint>> {
        Some(traits.to_vec())
    }

    fn kernel_dim(&self, _n: usize) -> Option<usize> {
        Some(0)
    }

    fn kernel_density(&self, _n: usize, _x: &TraitPoint, _nu: Marginal<'_>, _t: f64, _u: &[f64]) -> f64 {
        1.0
    }

    fn kernel_children(&self, n: usize, x: &TraitPoint, _nu: Marginal<'_>, _t: f64, _u: &[f64]) -> Vec<TraitPoint> {
        vec![x.clone(); n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn law_validation() {
        assert!(OffspringLaw::from_pairs(&[(0, 0.5), (2, 0.5)]).is_ok());
        assert!(OffspringLaw::from_pairs(&[(0, 0.5), (2, 0.4)]).is_err());
        assert!(OffspringLaw::from_pairs(&[(1, -0.1), (2, 1.1)]).is_err());
        let law = OffspringLaw::from_pairs(&[(2, 0.5), (0, 0.5)]).unwrap();
        assert_eq!(law.atoms()[0].0, 0);
        assert_eq!(law.mean(), 1.0);
    }

    #[test]
    fn table_truncation() {
        let mut probs = vec![0.0; 80];
        probs[1] = 0.5;
        probs[70] = 0.5;
        assert!(OffspringLaw::from_table(&probs, OffspringLaw::DEFAULT_MAX_CHILDREN).is_err());
        assert!(OffspringLaw::from_table(&probs, 70).is_ok());
    }

    #[test]
    fn inverse_cdf_sampling() {
        let law = OffspringLaw::from_pairs(&[(0, 0.25), (1, 0.25), (3, 0.5)]).unwrap();
        assert_eq!(law.sample_with(0.0), 0);
        assert_eq!(law.sample_with(0.3), 1);
        assert_eq!(law.sample_with(0.99), 3);
        assert_eq!(law.max_children(), 3);
    }

    #[test]
    fn constant_model_mean_size() {
        let m = ConstantRateModel::new(1.0, OffspringLaw::fixed(2)).unwrap();
        assert!((m.mean_size(1, 2.0) - 7.38905609893065).abs() < 1e-12);
    }
}
