//! Deterministic evolution of traits between branching events, and path
//! integrals along that evolution.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpinalError};
use crate::model::BranchingModel;
use crate::population::{Marginal, Population, TraitPoint};
use crate::quadrature::simpson_panels;
use crate::weight::WeightFunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowMode {
    /// Use the model's closed-form flow; falls back to RK4 when it has none.
    ClosedForm,
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowIntegrator {
    pub mode: FlowMode,
    /// RK4 step, also the Simpson panel width for log-weight quadrature.
    pub step: f64,
}

impl Default for FlowIntegrator {
    fn default() -> Self {
        FlowIntegrator { mode: FlowMode::ClosedForm, step: 1e-3 }
    }
}

impl FlowIntegrator {
    pub fn rk4(step: f64) -> Self {
        FlowIntegrator { mode: FlowMode::Rk4, step }
    }

    /// Traits at `t1` for a population holding `traits` at `t0`.
    pub fn advance<M: BranchingModel + ?Sized>(
        &self,
        model: &M,
        traits: &[TraitPoint],
        t0: f64,
        t1: f64,
    ) -> Result<Vec<TraitPoint>> {
        debug_assert!(t1 >= t0);
        if t1 == t0 || traits.is_empty() {
            return Ok(traits.to_vec());
        }
        let out = match self.mode {
            FlowMode::ClosedForm => match model.flow_closed_form(traits, t0, t1) {
                Some(v) => v,
                None => rk4(model, traits, t0, t1, self.step),
            },
            FlowMode::Rk4 => rk4(model, traits, t0, t1, self.step),
        };
        if out.iter().all(TraitPoint::is_finite) {
            Ok(out)
        } else {
            Err(SpinalError::NonFiniteTrait { time: t1 })
        }
    }
}

fn drifts<M: BranchingModel + ?Sized>(model: &M, state: &[TraitPoint], t: f64) -> Vec<TraitPoint> {
    let nu = Marginal::new(state);
    state.iter().map(|x| model.drift(x, nu, t)).collect()
}

/// Classical RK4 on the coupled system: every drift sees the marginal of the
/// stage state, not the frozen initial one.
fn rk4<M: BranchingModel + ?Sized>(model: &M, traits: &[TraitPoint], t0: f64, t1: f64, step: f64) -> Vec<TraitPoint> {
    let n = ((t1 - t0) / step).ceil().max(1.0) as usize;
    let h = (t1 - t0) / n as f64;
    let mut y = traits.to_vec();
    for k in 0..n {
        let t = t0 + k as f64 * h;
        let k1 = drifts(model, &y, t);
        let y2: Vec<_> = y.iter().zip(&k1).map(|(a, d)| a.add_scaled(0.5 * h, d)).collect();
        let k2 = drifts(model, &y2, t + 0.5 * h);
        let y3: Vec<_> = y.iter().zip(&k2).map(|(a, d)| a.add_scaled(0.5 * h, d)).collect();
        let k3 = drifts(model, &y3, t + 0.5 * h);
        let y4: Vec<_> = y.iter().zip(&k3).map(|(a, d)| a.add_scaled(h, d)).collect();
        let k4 = drifts(model, &y4, t + h);
        for (i, yi) in y.iter_mut().enumerate() {
            for c in 0..yi.dim() {
                let inc = h / 6.0 * (k1[i][c] + 2.0 * k2[i][c] + 2.0 * k3[i][c] + k4[i][c]);
                yi.as_mut_slice()[c] += inc;
            }
        }
    }
    y
}

/// Moves every trait of `pop` along the flow to time `t1`. Labels are unchanged.
pub fn advance_traits<M: BranchingModel + ?Sized>(
    pop: &Population,
    t1: f64,
    model: &M,
    integ: &FlowIntegrator,
) -> Result<Population> {
    let traits = integ.advance(model, pop.traits(), pop.time(), t1)?;
    Ok(pop.with_traits(t1, traits))
}

/// `∫_{t0}^{t1} f(s) ds` by composite Simpson with panels of width `step`.
pub fn path_integral<F: FnMut(f64) -> f64>(mut f: F, t0: f64, t1: f64, step: f64) -> Result<f64> {
    let mut bad = None;
    let v = crate::quadrature::simpson(
        |s| {
            let y = f(s);
            if !y.is_finite() && bad.is_none() {
                bad = Some(s);
            }
            y
        },
        t0,
        t1,
        step,
    );
    match bad {
        Some(time) => Err(SpinalError::QuadratureNonFinite { time }),
        None => Ok(v),
    }
}

/// `∫_{t0}^{t1} 𝒢ψ/ψ(Y_s, χ_s, s) ds` over an event-free stretch starting
/// from `pop` (at `t0 = pop.time()`) with spinal individual `spine`.
///
/// Uses the weight function's closed antiderivative when it provides one,
/// otherwise composite Simpson on the deterministically advanced state.
pub fn accumulate_log_weight(
    pop: &Population,
    spine: usize,
    model: &dyn BranchingModel,
    wf: &dyn WeightFunction,
    integ: &FlowIntegrator,
    t1: f64,
) -> Result<f64> {
    let t0 = pop.time();
    if t1 <= t0 {
        return Ok(0.0);
    }
    if let Some(v) = wf.log_weight_closed(model, spine, pop, t1) {
        return if v.is_finite() { Ok(v) } else { Err(SpinalError::QuadratureNonFinite { time: t0 }) };
    }
    let m = simpson_panels(t0, t1, integ.step);
    let h = (t1 - t0) / m as f64;
    let mut traits = pop.traits().to_vec();
    let mut t = t0;
    let mut acc = 0.0;
    for k in 0..=m {
        let tk = t0 + k as f64 * h;
        if k > 0 {
            traits = integ.advance(model, &traits, t, tk)?;
            t = tk;
        }
        let g = crate::spine::g_ratio(model, wf, spine, Marginal::new(&traits), tk)?;
        if !g.is_finite() {
            return Err(SpinalError::QuadratureNonFinite { time: tk });
        }
        let w = if k == 0 || k == m {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * g;
    }
    Ok(acc * h / 3.0)
}
