//! Adaptive-window thinning shared by the direct and spine engines.
//!
//! Candidate states are always obtained by flowing the population from the
//! last event (the anchor) to the candidate time, so a replay that applies the
//! same flow to the recorded events reproduces the run bit for bit.

use rand::{Rng, RngCore};

use crate::error::{Result, SpinalError};
use crate::flow::FlowIntegrator;
use crate::model::BranchingModel;
use crate::population::{Population, TraitPoint};

/// Relative slack tolerated between an instantaneous rate and its majorant.
const MAJORANT_SLACK: f64 = 1e-9;

/// One rate atom: member index, offspring count, rate.
pub(crate) type RateAtom = (usize, usize, f64);

pub(crate) struct Accepted {
    pub time: f64,
    /// Traits of every member at `time`, before the event.
    pub traits: Vec<TraitPoint>,
    pub member: usize,
    pub n: usize,
}

pub(crate) fn exp_draw(rng: &mut dyn RngCore, rate: f64) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// First accepted event in `(start, horizon)` for a population that sits at
/// `anchor` (time `anchor.time() ≤ start`) and evolves by the flow.
///
/// `rates(traits, t)` lists rate atoms in label order; `bound(pop, t0, t1)`
/// must dominate their sum over the window.
#[allow(clippy::too_many_arguments)]
pub(crate) fn next_event<M, R, B>(
    anchor: &Population,
    start: f64,
    horizon: f64,
    model: &M,
    integ: &FlowIntegrator,
    rng: &mut dyn RngCore,
    mut rates: R,
    mut bound: B,
    candidates: &mut u64,
) -> Result<Option<Accepted>>
where
    M: BranchingModel + ?Sized,
    R: FnMut(&[TraitPoint], f64) -> Result<Vec<RateAtom>>,
    B: FnMut(&Population, f64, f64) -> f64,
{
    let t_anchor = anchor.time();
    let at = |t: f64| -> Result<Population> {
        if t == t_anchor {
            Ok(anchor.clone())
        } else {
            Ok(anchor.with_traits(t, integ.advance(model, anchor.traits(), t_anchor, t)?))
        }
    };
    let mut t = start;
    if t >= horizon || anchor.is_empty() {
        return Ok(None);
    }
    let inst = bound(&at(t)?, t, t);
    let mut window = if inst > 0.0 { (1.0 / inst).min(horizon - t) } else { horizon - t };
    while t < horizon {
        let end = (t + window).min(horizon);
        let bar = bound(&at(t)?, t, end);
        if !bar.is_finite() {
            return Err(SpinalError::MajorantNonFinite { bound: bar, time: t });
        }
        if bar > 0.0 {
            let mut s = t;
            loop {
                s += exp_draw(rng, bar);
                if s >= end {
                    break;
                }
                *candidates += 1;
                let traits = integ.advance(model, anchor.traits(), t_anchor, s)?;
                let atoms = rates(&traits, s)?;
                let total: f64 = atoms.iter().map(|a| a.2).sum();
                if total > bar * (1.0 + MAJORANT_SLACK) {
                    return Err(SpinalError::MajorantViolated { rate: total, bound: bar, time: s });
                }
                let u = rng.random::<f64>() * bar;
                if u < total {
                    let (member, n) = pick(&atoms, u);
                    return Ok(Some(Accepted { time: s, traits, member, n }));
                }
            }
        }
        t = end;
        window *= 2.0;
    }
    Ok(None)
}

/// Atom selected by `u ∈ [0, Σ rates)` on the cumulative rates.
fn pick(atoms: &[RateAtom], u: f64) -> (usize, usize) {
    let mut acc = 0.0;
    let mut last = None;
    for &(member, n, rate) in atoms {
        if rate <= 0.0 {
            continue;
        }
        acc += rate;
        last = Some((member, n));
        if u < acc {
            return (member, n);
        }
    }
    last.expect("accepted candidate with positive total rate")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pick_follows_cumulative_rates() {
        let atoms = [(0, 2, 1.0), (1, 0, 0.0), (1, 2, 3.0)];
        assert_eq!(pick(&atoms, 0.5), (0, 2));
        assert_eq!(pick(&atoms, 1.0), (1, 2));
        assert_eq!(pick(&atoms, 3.999_999), (1, 2));
        assert_eq!(pick(&atoms, 4.0), (1, 2));
    }
}
