//! Simulation of the spine process: the population with a distinguished
//! individual whose lineage is chosen according to a weight function `ψ`.

use std::io::{BufRead, Write};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::direct::{validate_event, DirectRunConfig, EventRecord, RecordMode};
use crate::error::{Result, SpinalError};
use crate::flow::{accumulate_log_weight, advance_traits};
use crate::label::Label;
use crate::model::BranchingModel;
use crate::population::{Marginal, Population, SpineState, TraitPoint};
use crate::rng::stream_rng;
use crate::thinning::{self, RateAtom};
use crate::weight::WeightFunction;

/// Biased branching rates of every member at one state.
#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    /// `(n, B̂_n)` for each member outside the spine; empty at the spine index.
    pub outside: Vec<SmallVec<[(usize, f64); 4]>>,
    /// `(n, B̂*_n)` for the spinal individual.
    pub spine: SmallVec<[(usize, f64); 4]>,
    pub spine_index: usize,
    /// Total biased rate `τ̂` of each member.
    pub tau_hat: Vec<f64>,
    /// `τ̂_tot`, the sum of `tau_hat`.
    pub tau_tot: f64,
    /// `∫ B dν`, the total rate of the unbiased process at the same state.
    pub original_total: f64,
}

impl RateTable {
    pub fn spine_total(&self) -> f64 {
        self.spine.iter().map(|a| a.1).sum()
    }

    fn atoms(&self) -> Vec<RateAtom> {
        let mut out = Vec::with_capacity(self.outside.len() * 2);
        for (i, row) in self.outside.iter().enumerate() {
            let row = if i == self.spine_index { &self.spine } else { row };
            out.extend(row.iter().map(|&(n, r)| (i, n, r)));
        }
        out
    }
}

/// Rates at the state held by `state`, at its own time.
pub fn spine_rates(state: &SpineState, model: &dyn BranchingModel, wf: &dyn WeightFunction) -> Result<RateTable> {
    let pop = state.population();
    rate_table(model, wf, state.spine_index(), pop.marginal(), pop.time())
}

fn checked(n: usize, ratio: f64) -> Result<f64> {
    if ratio.is_finite() && ratio >= 0.0 {
        Ok(ratio)
    } else {
        Err(SpinalError::NormalizerNonFinite { n, value: ratio })
    }
}

pub fn rate_table(
    model: &dyn BranchingModel,
    wf: &dyn WeightFunction,
    spine: usize,
    nu: Marginal<'_>,
    t: f64,
) -> Result<RateTable> {
    let mut outside = Vec::with_capacity(nu.size());
    let mut spine_row = SmallVec::new();
    let mut tau_hat = Vec::with_capacity(nu.size());
    let mut original_total = 0.0;
    for (i, x) in nu.iter().enumerate() {
        let b = model.total_rate(x, nu, t);
        original_total += b;
        let mut row: SmallVec<[(usize, f64); 4]> = SmallVec::new();
        if b > 0.0 {
            for &(n, p) in model.offspring_law(x, nu, t).atoms() {
                let ratio = if i == spine {
                    if n == 0 {
                        continue;
                    }
                    checked(n, wf.spine_ratio(model, spine, nu, t, n)?)?
                } else {
                    checked(n, wf.outside_ratio(model, spine, i, nu, t, n)?)?
                };
                row.push((n, b * p * ratio));
            }
        }
        tau_hat.push(row.iter().map(|a| a.1).sum());
        if i == spine {
            spine_row = row;
            outside.push(SmallVec::new());
        } else {
            outside.push(row);
        }
    }
    let tau_tot = tau_hat.iter().sum();
    Ok(RateTable { outside, spine: spine_row, spine_index: spine, tau_hat, tau_tot, original_total })
}

/// `𝒢ψ/ψ` at a state: the weight function's closed form when it has one,
/// otherwise `Gψ/ψ + τ̂_tot − ∫ B dν`.
pub fn g_ratio(model: &dyn BranchingModel, wf: &dyn WeightFunction, spine: usize, nu: Marginal<'_>, t: f64) -> Result<f64> {
    if let Some(g) = wf.g_ratio_closed(model, spine, nu, t) {
        return Ok(g);
    }
    let table = rate_table(model, wf, spine, nu, t)?;
    Ok(wf.flow_log_derivative(model, spine, nu, t) + table.tau_tot - table.original_total)
}

/// Index drawn with probability proportional to `exp(logs[i])`.
pub(crate) fn softmax_draw(logs: &[f64], u: f64) -> usize {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    for (i, wi) in w.iter().enumerate() {
        acc += wi;
        if target < acc {
            return i;
        }
    }
    w.iter().rposition(|&wi| wi > 0.0).unwrap_or(0)
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// A biased event drawn at the state `(spine, nu, t)`, for a branching member
/// and offspring count already selected. Returns the children and, when the
/// spine branched, the zero-based index of the new spinal child.
#[allow(clippy::too_many_arguments)]
pub fn sample_spine_children(
    model: &dyn BranchingModel,
    wf: &dyn WeightFunction,
    spine: usize,
    member: usize,
    n: usize,
    nu: Marginal<'_>,
    t: f64,
    rng: &mut dyn RngCore,
) -> Result<(Vec<TraitPoint>, Option<usize>)> {
    if member != spine {
        return Ok((wf.sample_outside(model, spine, member, nu, t, n, rng)?, None));
    }
    let children = wf.sample_spine(model, spine, nu, t, n, rng)?;
    if children.is_empty() {
        return Err(SpinalError::InvalidArgument("spinal individual drew no children".into()));
    }
    let plus = nu.replaced(spine, &children);
    let m = Marginal::new(&plus);
    let logs: Vec<f64> = children.iter().map(|y| wf.ln_psi(y, m, t)).collect();
    let j = softmax_draw(&logs, rng.random::<f64>());
    Ok((children, Some(j)))
}

/// Draws one event of the spine process from the state `state`, choosing the
/// branching member and the offspring count by their biased rates at the
/// state's own time.
pub fn sample_spine_event(
    state: &SpineState,
    model: &dyn BranchingModel,
    wf: &dyn WeightFunction,
    rng: &mut dyn RngCore,
) -> Result<EventRecord> {
    let pop = state.population();
    let t = pop.time();
    let spine = state.spine_index();
    let table = spine_rates(state, model, wf)?;
    if !(table.tau_tot > 0.0) {
        return Err(SpinalError::InvalidArgument("no biased event has positive rate".into()));
    }
    let u = rng.random::<f64>() * table.tau_tot;
    let mut acc = 0.0;
    let mut chosen = None;
    for (member, n, rate) in table.atoms() {
        if rate <= 0.0 {
            continue;
        }
        acc += rate;
        chosen = Some((member, n));
        if u < acc {
            break;
        }
    }
    let (member, n) = chosen.expect("positive total rate");
    let (children, j) = sample_spine_children(model, wf, spine, member, n, pop.marginal(), t, rng)?;
    Ok(EventRecord {
        time: t,
        parent: pop.labels()[member].clone(),
        n_children: children.len(),
        child_traits: children,
        spine_involved: member == spine,
        new_spine_index: j,
    })
}

/// Position of the spinal individual along its path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpineMark {
    pub time: f64,
    pub label: Label,
    /// Trait of the spinal individual right after the mark.
    pub trait_value: TraitPoint,
    /// Children of the branching that produced the mark (0 for the start).
    pub n_children: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpineTrajectory {
    pub config: DirectRunConfig,
    pub initial: SpineState,
    pub events: Vec<EventRecord>,
    pub spine_history: Vec<SpineMark>,
    /// `∫_0^T 𝒢ψ/ψ(Y_s, χ_s, s) ds`.
    pub log_weight: f64,
    /// `ln ψ(Y_T, χ_T, T)`.
    pub ln_terminal_psi: f64,
    /// `ln ⟨z, ψ(·, z, 0)⟩` for the initial population `z`.
    pub ln_initial_psi_mass: f64,
    pub terminal: SpineState,
    pub n_events: usize,
    pub n_candidates: u64,
}

impl SpineTrajectory {
    pub fn terminal_psi(&self) -> f64 {
        self.ln_terminal_psi.exp()
    }

    pub fn spine_label(&self) -> &Label {
        self.terminal.spine()
    }

    pub fn spine_trait(&self) -> &TraitPoint {
        self.terminal.spine_trait()
    }

    pub fn horizon(&self) -> f64 {
        self.config.horizon
    }

    /// Number of spinal branchings with at least two children.
    pub fn spine_division_depth(&self) -> usize {
        self.spine_history.iter().filter(|m| m.n_children >= 2).count()
    }

    /// Rebuilds the terminal state from the event log.
    pub fn replay(&self, model: &dyn BranchingModel) -> Result<SpineState> {
        if self.config.record_mode != RecordMode::FullTrajectory {
            return Err(SpinalError::RequiresFullTrajectory);
        }
        let (mut spine, initial) = self.initial.clone().into_parts();
        let pop = crate::direct::replay_to(&initial, &self.events, model, &self.config.flow, self.config.horizon)?;
        for ev in &self.events {
            if let Some(j) = ev.new_spine_index {
                spine = ev.parent.child(j as u32 + 1);
            }
        }
        SpineState::new(spine, pop)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| SpinalError::InvalidArgument(format!("trajectory i/o: {e}"));
        let head = SpineLine::Header {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config.clone(),
            initial: self.initial.clone(),
        };
        let mut put = |line: &SpineLine| -> Result<()> {
            serde_json::to_writer(&mut w, line).map_err(|e| SpinalError::InvalidArgument(e.to_string()))?;
            w.write_all(b"\n").map_err(io)
        };
        put(&head)?;
        for ev in &self.events {
            put(&SpineLine::Event(ev.clone()))?;
        }
        put(&SpineLine::Summary {
            log_weight: self.log_weight,
            ln_terminal_psi: self.ln_terminal_psi,
            terminal_psi: self.terminal_psi(),
            ln_initial_psi_mass: self.ln_initial_psi_mass,
            spine_label: self.spine_label().clone(),
            spine_history: self.spine_history.clone(),
            terminal: self.terminal.clone(),
            n_events: self.n_events,
            n_candidates: self.n_candidates,
        })
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<SpineTrajectory> {
        let err = |e: String| SpinalError::InvalidArgument(format!("trajectory i/o: {e}"));
        let mut header = None;
        let mut events = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<SpineLine>(&line).map_err(|e| err(e.to_string()))? {
                SpineLine::Header { config, initial, .. } => header = Some((config, initial)),
                SpineLine::Event(ev) => events.push(ev),
                SpineLine::Summary {
                    log_weight,
                    ln_terminal_psi,
                    ln_initial_psi_mass,
                    spine_history,
                    terminal,
                    n_events,
                    n_candidates,
                    ..
                } => {
                    let (config, initial) = header.take().ok_or_else(|| err("summary before header".into()))?;
                    return Ok(SpineTrajectory {
                        config,
                        initial,
                        events,
                        spine_history,
                        log_weight,
                        ln_terminal_psi,
                        ln_initial_psi_mass,
                        terminal,
                        n_events,
                        n_candidates,
                    });
                }
            }
        }
        Err(err("missing summary line".into()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SpineLine {
    Header { version: String, config: DirectRunConfig, initial: SpineState },
    Event(EventRecord),
    Summary {
        log_weight: f64,
        ln_terminal_psi: f64,
        terminal_psi: f64,
        ln_initial_psi_mass: f64,
        spine_label: Label,
        spine_history: Vec<SpineMark>,
        terminal: SpineState,
        n_events: usize,
        n_candidates: u64,
    },
}

/// `ln ⟨z, ψ(·, z, t)⟩`.
pub fn ln_psi_mass(wf: &dyn WeightFunction, pop: &Population) -> f64 {
    let nu = pop.marginal();
    let logs: Vec<f64> = pop.traits().iter().map(|x| wf.ln_psi(x, nu, pop.time())).collect();
    log_sum_exp(&logs)
}

/// Draws the initial spinal individual of `pop` with probability
/// `ψ(x^i, z, t) / ⟨z, ψ(·, z, t)⟩`.
pub fn draw_initial_spine(wf: &dyn WeightFunction, pop: &Population, rng: &mut dyn RngCore) -> Result<SpineState> {
    if pop.is_empty() {
        return Err(SpinalError::InvalidArgument("spine process needs a nonempty initial population".into()));
    }
    let nu = pop.marginal();
    let logs: Vec<f64> = pop.traits().iter().map(|x| wf.ln_psi(x, nu, pop.time())).collect();
    let i = softmax_draw(&logs, rng.random::<f64>());
    SpineState::new(pop.labels()[i].clone(), pop.clone())
}

/// Spine process started from a bare population; the initial spine is drawn
/// proportionally to `ψ` from the run's own random stream.
pub fn simulate_spine(
    initial: &Population,
    model: &dyn BranchingModel,
    wf: &dyn WeightFunction,
    cfg: &DirectRunConfig,
) -> Result<SpineTrajectory> {
    let mut rng = stream_rng(cfg.seed, cfg.stream);
    simulate_spine_with_rng(initial, model, wf, cfg, &mut rng)
}

pub fn simulate_spine_with_rng(
    initial: &Population,
    model: &dyn BranchingModel,
    wf: &dyn WeightFunction,
    cfg: &DirectRunConfig,
    rng: &mut dyn RngCore,
) -> Result<SpineTrajectory> {
    let state = draw_initial_spine(wf, initial, rng)?;
    simulate_spine_from_with_rng(&state, model, wf, cfg, rng)
}

pub fn simulate_spine_from(
    initial: &SpineState,
    model: &dyn BranchingModel,
    wf: &dyn WeightFunction,
    cfg: &DirectRunConfig,
) -> Result<SpineTrajectory> {
    let mut rng = stream_rng(cfg.seed, cfg.stream);
    simulate_spine_from_with_rng(initial, model, wf, cfg, &mut rng)
}

pub fn simulate_spine_from_with_rng(
    initial: &SpineState,
    model: &dyn BranchingModel,
    wf: &dyn WeightFunction,
    cfg: &DirectRunConfig,
    rng: &mut dyn RngCore,
) -> Result<SpineTrajectory> {
    cfg.check()?;
    let horizon = cfg.horizon;
    let integ = cfg.flow;
    let full = cfg.record_mode == RecordMode::FullTrajectory;
    let mut anchor = initial.population().clone();
    let mut spine = initial.spine_index();
    let ln_initial_psi_mass = ln_psi_mass(wf, &anchor);
    let mut history = vec![SpineMark {
        time: anchor.time(),
        label: initial.spine().clone(),
        trait_value: initial.spine_trait().clone(),
        n_children: 0,
    }];
    let mut events = Vec::new();
    let mut n_events = 0usize;
    let mut candidates = 0u64;
    let mut log_weight = 0.0;

    loop {
        let sp = spine;
        let acc = thinning::next_event(
            &anchor,
            anchor.time(),
            horizon,
            model,
            &integ,
            rng,
            |traits, t| Ok(rate_table(model, wf, sp, Marginal::new(traits), t)?.atoms()),
            |p, a, b| wf.tilted_rate_bound(model, p, sp, a, b),
            &mut candidates,
        )?;
        let Some(acc) = acc else { break };
        if n_events >= cfg.max_events {
            return Err(SpinalError::EventCapExceeded { cap: cfg.max_events, time: acc.time });
        }
        log_weight += accumulate_log_weight(&anchor, spine, model, wf, &integ, acc.time)?;
        let nu = Marginal::new(&acc.traits);
        let (children, j) = sample_spine_children(model, wf, spine, acc.member, acc.n, nu, acc.time, rng)?;
        if cfg.validate {
            validate_event(model, &acc.traits[acc.member], &children, acc.time)?;
        }
        let n = children.len();
        let mut pop = anchor.with_traits(acc.time, acc.traits);
        let parent = pop.labels()[acc.member].clone();
        if full {
            events.push(EventRecord {
                time: acc.time,
                parent,
                n_children: n,
                child_traits: children.clone(),
                spine_involved: j.is_some(),
                new_spine_index: j,
            });
        }
        let range = pop.branch(acc.member, children);
        if let Some(j) = j {
            spine = range.start + j;
            history.push(SpineMark {
                time: acc.time,
                label: pop.labels()[spine].clone(),
                trait_value: pop.traits()[spine].clone(),
                n_children: n,
            });
        } else if acc.member < spine {
            spine = spine + n - 1;
        }
        anchor = pop;
        n_events += 1;
    }
    log_weight += accumulate_log_weight(&anchor, spine, model, wf, &integ, horizon)?;
    let terminal_pop = advance_traits(&anchor, horizon, model, &integ)?;
    let ln_terminal_psi = wf.ln_psi(&terminal_pop.traits()[spine], terminal_pop.marginal(), horizon);
    if !ln_terminal_psi.is_finite() {
        return Err(SpinalError::QuadratureNonFinite { time: horizon });
    }
    let terminal = SpineState::new(terminal_pop.labels()[spine].clone(), terminal_pop)?;
    Ok(SpineTrajectory {
        config: cfg.clone(),
        initial: initial.clone(),
        events,
        spine_history: history,
        log_weight,
        ln_terminal_psi,
        ln_initial_psi_mass,
        terminal,
        n_events,
        n_candidates: candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstantRateModel, OffspringLaw};
    use crate::weight::UnitWeight;

    fn critical() -> ConstantRateModel {
        ConstantRateModel::new(1.0, OffspringLaw::from_pairs(&[(0, 0.5), (2, 0.5)]).unwrap()).unwrap()
    }

    #[test]
    fn unit_weight_rates() {
        let model = critical();
        let pop = Population::from_scalars(0.0, &[0.0, 0.0, 0.0]);
        let state = SpineState::new(Label::ancestor(2), pop).unwrap();
        let table = spine_rates(&state, &model, &UnitWeight).unwrap();
        assert_eq!(table.spine.as_slice(), &[(2, 1.0)]);
        assert_eq!(table.outside[0].as_slice(), &[(0, 0.5), (2, 0.5)]);
        assert_eq!(table.spine_total(), 1.0);
        assert_eq!(table.tau_tot, 3.0);
        assert_eq!(table.original_total, 3.0);
    }

    #[test]
    fn zero_rates_give_empty_table() {
        let model = ConstantRateModel::new(0.0, OffspringLaw::fixed(2)).unwrap();
        let state = SpineState::new(Label::ancestor(1), Population::from_scalars(0.0, &[1.0, 1.0])).unwrap();
        let table = spine_rates(&state, &model, &UnitWeight).unwrap();
        assert_eq!(table.tau_tot, 0.0);
        assert!(table.tau_hat.iter().all(|&r| r == 0.0));
        let traj = simulate_spine_from(&state, &model, &UnitWeight, &DirectRunConfig::new(3.0, 1)).unwrap();
        assert_eq!(traj.n_events, 0);
        assert_eq!(traj.log_weight, 0.0);
    }

    #[test]
    fn softmax_draw_respects_weights() {
        let logs = [0.0, 1f64.ln() + 2f64.ln()];
        assert_eq!(softmax_draw(&logs, 0.3), 0);
        assert_eq!(softmax_draw(&logs, 0.4), 1);
        assert_eq!(softmax_draw(&[f64::NEG_INFINITY, 0.0], 0.0), 1);
    }

    #[test]
    fn spine_survives_and_replays() {
        let model = critical();
        let pop = Population::from_scalars(0.0, &[0.0, 0.0]);
        for seed in 0..20 {
            let cfg = DirectRunConfig::new(3.0, seed);
            let traj = simulate_spine(&pop, &model, &UnitWeight, &cfg).unwrap();
            assert!(!traj.terminal.population().is_empty());
            for ev in traj.events.iter().filter(|e| e.spine_involved) {
                assert!(ev.n_children >= 1);
            }
            for w in traj.spine_history.windows(2) {
                assert!(w[0].label.is_ancestor_of(&w[1].label));
            }
            assert_eq!(traj.replay(&model).unwrap(), traj.terminal);
            let back = SpineTrajectory::read_jsonl(traj.to_jsonl_string().as_bytes()).unwrap();
            assert_eq!(back, traj);
            assert!((traj.log_weight - 0.0).abs() < 1e-12);
        }
    }
}
