//! Parameters of the Yule model with competition.

use std::fmt::Debug;
use std::sync::Arc;

use statrs::function::beta::{beta_reg, inv_beta_reg, ln_beta};

use crate::error::{Result, SpinalError};
use crate::quadrature::GaussLegendre;
use crate::time_fn::TimeFn;

/// Law of a fraction in `(0, 1)`, given by its density and inverse CDF.
pub trait FractionLaw: Send + Sync + Debug {
    fn density(&self, x: f64) -> f64;
    fn cdf(&self, x: f64) -> f64;
    fn inverse_cdf(&self, u: f64) -> f64;
    fn mean(&self) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaLaw {
    a: f64,
    b: f64,
    ln_norm: f64,
}

impl BetaLaw {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(SpinalError::InvalidArgument(format!("Beta({a}, {b}) needs positive finite parameters")));
        }
        Ok(BetaLaw { a, b, ln_norm: ln_beta(a, b) })
    }

    pub fn uniform() -> Self {
        BetaLaw { a: 1.0, b: 1.0, ln_norm: 0.0 }
    }

    pub fn params(&self) -> (f64, f64) {
        (self.a, self.b)
    }
}

fn xlogy(k: f64, y: f64) -> f64 {
    if k == 0.0 {
        0.0
    } else {
        k * y.ln()
    }
}

impl FractionLaw for BetaLaw {
    fn density(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        (xlogy(self.a - 1.0, x) + xlogy(self.b - 1.0, 1.0 - x) - self.ln_norm).exp()
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            beta_reg(self.a, self.b, x)
        }
    }

    fn inverse_cdf(&self, u: f64) -> f64 {
        match (self.a == 1.0, self.b == 1.0) {
            (true, true) => u,
            (true, false) => 1.0 - (1.0 - u).powf(1.0 / self.b),
            (false, true) => u.powf(1.0 / self.a),
            (false, false) => inv_beta_reg(self.a, self.b, u),
        }
    }

    fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

/// Coefficients and fraction laws of the Yule model with competition.
///
/// An individual of mass `x` divides at rate `r(t) x` into `Λx` and `(1-Λ)x`
/// with `Λ ~ q`, loses mass at rate `d(t) S` (with `S` the population size)
/// keeping the fraction `Θ ~ p`, and grows at rate `μ(t) x`.
#[derive(Clone, Debug)]
pub struct YuleParams {
    pub r: TimeFn,
    pub d: TimeFn,
    pub mu: TimeFn,
    pub division: Arc<dyn FractionLaw>,
    /// `q̂(λ) = q(λ) / (λ(1-λ) K_div)`.
    pub division_biased: Arc<dyn FractionLaw>,
    pub loss: Arc<dyn FractionLaw>,
    /// `p̂(θ) = p(θ) / (θ K_loss)`.
    pub loss_biased: Arc<dyn FractionLaw>,
    /// `E[1 / (Λ(1-Λ))]`.
    pub k_div: f64,
    pub m_div: f64,
    /// `E[1 / Θ]`.
    pub k_loss: f64,
    pub m_loss: f64,
}

impl YuleParams {
    /// Beta fraction laws `q = Beta(div.0, div.1)` and `p = Beta(loss.0, loss.1)`.
    /// `K_div` is finite only when both division parameters exceed 1, and
    /// `K_loss` only when the first loss parameter exceeds 1.
    pub fn beta(r: TimeFn, d: TimeFn, mu: TimeFn, div: (f64, f64), loss: (f64, f64)) -> Result<Self> {
        let (a, b) = div;
        let (c, e) = loss;
        if !(a > 1.0 && b > 1.0) {
            return Err(SpinalError::InvalidMoments(format!("K_div is infinite for q = Beta({a}, {b})")));
        }
        if !(c > 1.0 && e > 0.0) {
            return Err(SpinalError::InvalidMoments(format!("K_loss is infinite for p = Beta({c}, {e})")));
        }
        let k_div = (ln_beta(a - 1.0, b - 1.0) - ln_beta(a, b)).exp();
        let k_loss = (c + e - 1.0) / (c - 1.0);
        let params = YuleParams {
            r,
            d,
            mu,
            division: Arc::new(BetaLaw::new(a, b)?),
            division_biased: Arc::new(BetaLaw::new(a - 1.0, b - 1.0)?),
            loss: Arc::new(BetaLaw::new(c, e)?),
            loss_biased: Arc::new(BetaLaw::new(c - 1.0, e)?),
            k_div,
            m_div: a / (a + b),
            k_loss,
            m_loss: c / (c + e),
        };
        params.check()?;
        Ok(params)
    }

    /// Constant rates with Beta fraction laws.
    pub fn constant(r: f64, d: f64, mu: f64, div: (f64, f64), loss: (f64, f64)) -> Result<Self> {
        Self::beta(TimeFn::constant(r), TimeFn::constant(d), TimeFn::constant(mu), div, loss)
    }

    /// Arbitrary fraction laws together with their biased versions. The
    /// moments are computed by quadrature and must be finite.
    pub fn with_laws(
        r: TimeFn,
        d: TimeFn,
        mu: TimeFn,
        division: Arc<dyn FractionLaw>,
        division_biased: Arc<dyn FractionLaw>,
        loss: Arc<dyn FractionLaw>,
        loss_biased: Arc<dyn FractionLaw>,
    ) -> Result<Self> {
        let gl = GaussLegendre::standard();
        let k_div = gl.integrate(|l| division.density(l) / (l * (1.0 - l)));
        let k_loss = gl.integrate(|th| loss.density(th) / th);
        let params = YuleParams {
            r,
            d,
            mu,
            m_div: division.mean(),
            m_loss: loss.mean(),
            division,
            division_biased,
            loss,
            loss_biased,
            k_div,
            k_loss,
        };
        params.check()?;
        Ok(params)
    }

    fn check(&self) -> Result<()> {
        let bad = |what: String| Err(SpinalError::InvalidMoments(what));
        if !(self.k_div.is_finite() && self.k_div >= 4.0 * (1.0 - 1e-9)) {
            return bad(format!("K_div = {} must be finite and >= 4", self.k_div));
        }
        if !(self.k_loss.is_finite() && self.k_loss >= 1.0 - 1e-9) {
            return bad(format!("K_loss = {} must be finite and >= 1", self.k_loss));
        }
        for (name, m) in [("m_div", self.m_div), ("m_loss", self.m_loss)] {
            if !(m > 0.0 && m < 1.0) {
                return bad(format!("{name} = {m} must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_closed_forms_match_quadrature() {
        let p = YuleParams::constant(1.0, 0.1, 0.0, (2.0, 2.0), (2.0, 1.0)).unwrap();
        assert!((p.k_div - 6.0).abs() < 1e-12);
        assert!((p.k_loss - 2.0).abs() < 1e-12);
        assert!((p.m_loss - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.division_biased.inverse_cdf(0.3), 0.3);
        assert_eq!(p.loss_biased.inverse_cdf(0.7), 0.7);
        let gl = GaussLegendre::standard();
        let k = gl.integrate(|l| 6.0 * l * (1.0 - l) / (l * (1.0 - l)));
        assert!((k - 6.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_moments_are_rejected() {
        assert!(matches!(
            YuleParams::constant(1.0, 0.1, 0.0, (1.0, 2.0), (2.0, 1.0)),
            Err(SpinalError::InvalidMoments(_))
        ));
        assert!(matches!(
            YuleParams::constant(1.0, 0.1, 0.0, (2.0, 2.0), (1.0, 1.0)),
            Err(SpinalError::InvalidMoments(_))
        ));
    }

    #[test]
    fn beta_inverse_cdf_round_trips() {
        let law = BetaLaw::new(2.5, 3.5).unwrap();
        for u in [0.01, 0.2, 0.5, 0.77, 0.99] {
            assert!((law.cdf(law.inverse_cdf(u)) - u).abs() < 1e-10);
        }
        let g = BetaLaw::new(1.0, 3.0).unwrap();
        assert!((g.cdf(g.inverse_cdf(0.4)) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn with_laws_computes_moments() {
        let p = YuleParams::with_laws(
            TimeFn::constant(1.0),
            TimeFn::constant(0.2),
            TimeFn::constant(0.0),
            Arc::new(BetaLaw::new(3.0, 3.0).unwrap()),
            Arc::new(BetaLaw::new(2.0, 2.0).unwrap()),
            Arc::new(BetaLaw::new(3.0, 1.0).unwrap()),
            Arc::new(BetaLaw::new(2.0, 1.0).unwrap()),
        )
        .unwrap();
        // B(2,2)/B(3,3) = 5 and (3+1-1)/(3-1) = 1.5.
        assert!((p.k_div - 5.0).abs() < 1e-10);
        assert!((p.k_loss - 1.5).abs() < 1e-10);
    }
}
