use rand::{Rng, RngCore};

use crate::error::Result;
use crate::model::BranchingModel;
use crate::population::{Marginal, Population, TraitPoint};
use crate::quadrature::simpson;
use crate::weight::{QuadratureWeight, WeightFunction};

use super::params::YuleParams;

/// `ψ(x_e, ν, t) = x_e / ∏_{u ∈ ν} (r(t) K_div x^u)`.
///
/// Under this weight every individual divides at rate 1, fractions follow
/// `q̂`, individuals outside the spine lose mass at rate `K_loss d(t) S` with
/// fractions from `p̂`, and the spine loses mass as in the original model.
#[derive(Clone, Debug)]
pub struct YuleWeight {
    params: YuleParams,
}

pub fn yule_weight(params: YuleParams) -> YuleWeight {
    YuleWeight { params }
}

impl YuleWeight {
    pub fn new(params: YuleParams) -> Self {
        YuleWeight { params }
    }

    pub fn params(&self) -> &YuleParams {
        &self.params
    }

    /// `𝒢ψ/ψ = μ + [-ṙ/r - μ + 1 + d (S-1)(K_loss-1)] S - r B` with `S = ⟨ν, 1⟩`
    /// and `B = ⟨ν, id⟩`.
    pub fn g_ratio_at(&self, s: f64, mass: f64, t: f64) -> f64 {
        let p = &self.params;
        let (r, mu, d) = (p.r.value(t), p.mu.value(t), p.d.value(t));
        mu + (-p.r.derivative(t) / r - mu + 1.0 + d * (s - 1.0) * (p.k_loss - 1.0)) * s - r * mass
    }

    /// `∫_{t0}^{t1} 𝒢ψ/ψ ds` for `s` individuals of total mass `mass` at `t0`
    /// and no event in between.
    pub fn segment_log_weight(&self, s: usize, mass: f64, t0: f64, t1: f64) -> f64 {
        segment_log_weight(&self.params, s, mass, t0, t1)
    }

    /// Weight given only by `ln ψ`, with normalizers left to quadrature.
    pub fn generic(&self) -> QuadratureWeight {
        let p = self.params.clone();
        QuadratureWeight::new(move |x, nu, t| ln_psi(&p, x, nu, t), f64::INFINITY, f64::INFINITY)
    }

    /// `𝒢ψ/ψ` from the quadrature normalizers and the numerical flow
    /// derivative, independent of the closed forms.
    pub fn generic_g_ratio(&self, model: &dyn BranchingModel, spine: usize, nu: Marginal<'_>, t: f64) -> Result<f64> {
        crate::spine::g_ratio(model, &self.generic(), spine, nu, t)
    }
}

fn ln_psi(p: &YuleParams, x_e: &TraitPoint, nu: Marginal<'_>, t: f64) -> f64 {
    let s = nu.size() as f64;
    x_e.value().ln() - s * (p.r.value(t) * p.k_div).ln() - nu.iter().map(|x| x.value().ln()).sum::<f64>()
}

pub(crate) fn segment_log_weight(p: &YuleParams, s: usize, mass: f64, t0: f64, t1: f64) -> f64 {
    if t1 <= t0 {
        return 0.0;
    }
    let s = s as f64;
    let len = t1 - t0;
    let drift = (1.0 - s) * p.mu.integral(t0, t1);
    let rate = -s * (p.r.value(t1).ln() - p.r.value(t0).ln());
    let pop = s * len + s * (s - 1.0) * (p.k_loss - 1.0) * p.d.integral(t0, t1);
    let division = match (p.r.as_constant(), p.mu.as_constant()) {
        (Some(r), Some(0.0)) => r * mass * len,
        (Some(r), Some(mu)) => r * mass * (mu * len).exp_m1() / mu,
        _ => simpson(|u| p.r.value(u) * mass * p.mu.integral(t0, u).exp(), t0, t1, 1e-3),
    };
    drift + rate + pop - division
}

impl WeightFunction for YuleWeight {
    fn ln_psi(&self, x_e: &TraitPoint, nu: Marginal<'_>, t: f64) -> f64 {
        ln_psi(&self.params, x_e, nu, t)
    }

    fn flow_log_derivative(&self, _model: &dyn BranchingModel, _spine: usize, nu: Marginal<'_>, t: f64) -> f64 {
        let p = &self.params;
        let s = nu.size() as f64;
        p.mu.value(t) - s * p.r.derivative(t) / p.r.value(t) - s * p.mu.value(t)
    }

    fn g_ratio_closed(&self, _model: &dyn BranchingModel, _spine: usize, nu: Marginal<'_>, t: f64) -> Option<f64> {
        Some(self.g_ratio_at(nu.size() as f64, nu.total_mass(), t))
    }

    fn log_weight_closed(&self, _model: &dyn BranchingModel, _spine: usize, pop: &Population, t1: f64) -> Option<f64> {
        Some(self.segment_log_weight(pop.len(), pop.marginal().total_mass(), pop.time(), t1))
    }

    fn outside_ratio(
        &self,
        _model: &dyn BranchingModel,
        _spine: usize,
        parent: usize,
        nu: Marginal<'_>,
        t: f64,
        n: usize,
    ) -> Result<f64> {
        Ok(match n {
            2 => 1.0 / (self.params.r.value(t) * nu.traits()[parent].value()),
            1 => self.params.k_loss,
            _ => 0.0,
        })
    }

    fn spine_ratio(&self, _model: &dyn BranchingModel, spine: usize, nu: Marginal<'_>, t: f64, n: usize) -> Result<f64> {
        Ok(match n {
            2 => 1.0 / (self.params.r.value(t) * nu.traits()[spine].value()),
            1 => 1.0,
            _ => 0.0,
        })
    }

    fn sample_outside(
        &self,
        _model: &dyn BranchingModel,
        _spine: usize,
        parent: usize,
        nu: Marginal<'_>,
        _t: f64,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<TraitPoint>> {
        let y = nu.traits()[parent].value();
        Ok(match n {
            2 => {
                let l = self.params.division_biased.inverse_cdf(rng.random::<f64>());
                vec![TraitPoint::scalar(l * y), TraitPoint::scalar((1.0 - l) * y)]
            }
            _ => vec![TraitPoint::scalar(self.params.loss_biased.inverse_cdf(rng.random::<f64>()) * y)],
        })
    }

    fn sample_spine(
        &self,
        _model: &dyn BranchingModel,
        spine: usize,
        nu: Marginal<'_>,
        _t: f64,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<TraitPoint>> {
        let x = nu.traits()[spine].value();
        Ok(match n {
            2 => {
                let l = self.params.division_biased.inverse_cdf(rng.random::<f64>());
                vec![TraitPoint::scalar(l * x), TraitPoint::scalar((1.0 - l) * x)]
            }
            _ => vec![TraitPoint::scalar(self.params.loss.inverse_cdf(rng.random::<f64>()) * x)],
        })
    }

    fn tilted_rate_bound(&self, _model: &dyn BranchingModel, pop: &Population, _spine: usize, t0: f64, t1: f64) -> f64 {
        let s = pop.len() as f64;
        s + self.params.d.sup(t0, t1) * (self.params.k_loss * s * (s - 1.0) + s)
    }
}
