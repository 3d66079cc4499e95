//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls the library's quadrature, weight functions or closed
//! forms: the Yule operator is evaluated term by term from its definition.

#![allow(dead_code)]

use statrs::function::beta::ln_beta;

/// Composite five-point Gauss-Legendre rule on `[a, b]`; never evaluates the
/// endpoints.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683_1,
        0.0,
        0.538_469_310_105_683_1,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.236_926_885_056_189_1,
        0.478_628_670_499_366_5,
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
    ];
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(W) {
            acc += w * f(mid + 0.5 * h * x);
        }
    }
    0.5 * h * acc
}

/// Beta density on `(0, 1)`.
pub fn beta_density(a: f64, b: f64) -> impl Fn(f64) -> f64 + Clone {
    let ln_norm = ln_beta(a, b);
    move |x: f64| ((a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_norm).exp()
}

/// Yule model written out as plain closures.
pub struct YuleOracle {
    pub r: Box<dyn Fn(f64) -> f64>,
    pub d: Box<dyn Fn(f64) -> f64>,
    pub mu: Box<dyn Fn(f64) -> f64>,
    pub q: Box<dyn Fn(f64) -> f64>,
    pub p: Box<dyn Fn(f64) -> f64>,
}

const PANELS: usize = 400;

impl YuleOracle {
    pub fn beta(r: (f64, f64), d: (f64, f64), mu: f64, div: (f64, f64), loss: (f64, f64)) -> Self {
        YuleOracle {
            r: Box::new(move |t| r.0 + r.1 * t),
            d: Box::new(move |t| d.0 + d.1 * t),
            mu: Box::new(move |_| mu),
            q: Box::new(beta_density(div.0, div.1)),
            p: Box::new(beta_density(loss.0, loss.1)),
        }
    }

    /// `E[1/(Λ(1-Λ))]` by quadrature.
    pub fn k_div(&self) -> f64 {
        integrate(|l| (self.q)(l) / (l * (1.0 - l)), 0.0, 1.0, PANELS)
    }

    /// `E[1/Θ]` by quadrature.
    pub fn k_loss(&self) -> f64 {
        integrate(|th| (self.p)(th) / th, 0.0, 1.0, PANELS)
    }

    /// `ψ(x_e, ν, t) = x_e / ∏ (r(t) K_div x^u)`.
    pub fn psi(&self, x_e: f64, nu: &[f64], t: f64, k_div: f64) -> f64 {
        let rk = (self.r)(t) * k_div;
        x_e / nu.iter().map(|x| rk * x).product::<f64>()
    }

    fn replace(nu: &[f64], i: usize, children: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = nu.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x).collect();
        out.extend_from_slice(children);
        out
    }

    /// Jump part `(𝒢 - G)ψ / ψ` at the state `(x_e = nu[spine], ν, t)`.
    pub fn jump_ratio(&self, nu: &[f64], spine: usize, t: f64) -> f64 {
        let kd = self.k_div();
        let (r, d) = ((self.r)(t), (self.d)(t));
        let s = nu.len() as f64;
        let x_e = nu[spine];
        let base = self.psi(x_e, nu, t, kd);

        let spine_div = r * x_e
            * integrate(
                |l| {
                    let plus = Self::replace(nu, spine, &[l * x_e, (1.0 - l) * x_e]);
                    let bracket = self.psi(l * x_e, &plus, t, kd) + self.psi((1.0 - l) * x_e, &plus, t, kd)
                        - self.psi(x_e, &plus, t, kd);
                    bracket * (self.q)(l)
                },
                0.0,
                1.0,
                PANELS,
            );
        let spine_loss = d * s
            * integrate(
                |th| {
                    let plus = Self::replace(nu, spine, &[th * x_e]);
                    (self.psi(th * x_e, &plus, t, kd) - self.psi(x_e, &plus, t, kd)) * (self.p)(th)
                },
                0.0,
                1.0,
                PANELS,
            );
        let mut others = 0.0;
        for (u, &y) in nu.iter().enumerate() {
            others += r * y
                * integrate(
                    |l| {
                        let plus = Self::replace(nu, u, &[l * y, (1.0 - l) * y]);
                        (self.psi(x_e, &plus, t, kd) - base) * (self.q)(l)
                    },
                    0.0,
                    1.0,
                    PANELS,
                );
            others += d * s
                * integrate(
                    |th| {
                        let plus = Self::replace(nu, u, &[th * y]);
                        (self.psi(x_e, &plus, t, kd) - base) * (self.p)(th)
                    },
                    0.0,
                    1.0,
                    PANELS,
                );
        }
        (spine_div + spine_loss + others) / base
    }

    /// Flow part `Gψ / ψ` by a central difference along the deterministic
    /// growth `x ↦ x exp(∫ μ)`.
    pub fn flow_ratio(&self, nu: &[f64], spine: usize, t: f64) -> f64 {
        let kd = self.k_div();
        let h = 1e-5 * (1.0 + t);
        let at = |dt: f64| {
            let g = (integrate(|s| (self.mu)(s), t, t + dt, 8)).exp();
            let moved: Vec<f64> = nu.iter().map(|x| x * g).collect();
            self.psi(moved[spine], &moved, t + dt, kd).ln()
        };
        (at(h) - at(-h)) / (2.0 * h)
    }

    /// `𝒢ψ / ψ` from the operator definition.
    pub fn generator_ratio(&self, nu: &[f64], spine: usize, t: f64) -> f64 {
        self.flow_ratio(nu, spine, t) + self.jump_ratio(nu, spine, t)
    }
}

/// Relative error of `a` against `b`, absolute below `|b| = 1e-3`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-3)
}
