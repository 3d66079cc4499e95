//! Exact simulation of the interacting branching process by thinning.

use std::io::{BufRead, Write};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpinalError};
use crate::flow::{advance_traits, FlowIntegrator};
use crate::label::Label;
use crate::model::BranchingModel;
use crate::population::{Marginal, Population, TraitPoint};
use crate::rng::stream_rng;
use crate::thinning::{self, RateAtom};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    /// Every event, enough to replay the run.
    FullTrajectory,
    /// Only the terminal population and counters.
    TerminalOnly,
    /// Size and total mass of the population at the listed times.
    Functionals(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectRunConfig {
    pub horizon: f64,
    pub max_events: usize,
    pub seed: u64,
    pub stream: u64,
    pub record_mode: RecordMode,
    pub flow: FlowIntegrator,
    /// Check domain, mass conservation and label order after every event.
    pub validate: bool,
}

impl DirectRunConfig {
    pub const DEFAULT_MAX_EVENTS: usize = 1_000_000;

    pub fn new(horizon: f64, seed: u64) -> Self {
        DirectRunConfig {
            horizon,
            max_events: Self::DEFAULT_MAX_EVENTS,
            seed,
            stream: 0,
            record_mode: RecordMode::FullTrajectory,
            flow: FlowIntegrator::default(),
            validate: false,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_record_mode(mut self, mode: RecordMode) -> Self {
        self.record_mode = mode;
        self
    }

    pub fn with_max_events(mut self, cap: usize) -> Self {
        self.max_events = cap;
        self
    }

    pub fn with_flow(mut self, flow: FlowIntegrator) -> Self {
        self.flow = flow;
        self
    }

    pub fn validating(mut self) -> Self {
        self.validate = true;
        self
    }

    pub(crate) fn check(&self) -> Result<()> {
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(SpinalError::InvalidArgument(format!("horizon must be finite and >= 0, got {}", self.horizon)));
        }
        if self.max_events == 0 {
            return Err(SpinalError::InvalidArgument("max_events must be >= 1".into()));
        }
        if !(self.flow.step > 0.0) {
            return Err(SpinalError::InvalidArgument(format!("flow step must be > 0, got {}", self.flow.step)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub parent: Label,
    pub n_children: usize,
    pub child_traits: Vec<TraitPoint>,
    pub spine_involved: bool,
    /// Zero-based index of the child that carries the spine on.
    pub new_spine_index: Option<usize>,
}

impl EventRecord {
    pub fn child_labels(&self) -> Vec<Label> {
        (1..=self.n_children as u32).map(|i| self.parent.child(i)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub size: usize,
    pub mass: f64,
}

impl Snapshot {
    pub fn of(pop: &Population) -> Self {
        Snapshot { time: pop.time(), size: pop.len(), mass: pop.integral(TraitPoint::norm_l1) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: DirectRunConfig,
    pub initial: Population,
    pub events: Vec<EventRecord>,
    pub terminal: Population,
    pub extinct: bool,
    pub extinction_time: Option<f64>,
    pub n_events: usize,
    pub n_candidates: u64,
    pub snapshots: Vec<Snapshot>,
}

/// First accepted event within `window` of `pop.time()`: `(time, parent, n)`.
pub fn next_event_thinning<M: BranchingModel + ?Sized>(
    pop: &Population,
    model: &M,
    integ: &FlowIntegrator,
    rng: &mut dyn RngCore,
    window: f64,
) -> Result<Option<(f64, Label, usize)>> {
    let mut candidates = 0;
    let t0 = pop.time();
    let acc = thinning::next_event(
        pop,
        t0,
        t0 + window,
        model,
        integ,
        rng,
        |traits, t| Ok(direct_rates(model, traits, t)),
        |p, a, b| model.rate_bound(p, a, b),
        &mut candidates,
    )?;
    Ok(acc.map(|a| (a.time, pop.labels()[a.member].clone(), a.n)))
}

pub(crate) fn direct_rates<M: BranchingModel + ?Sized>(model: &M, traits: &[TraitPoint], t: f64) -> Vec<RateAtom> {
    let nu = Marginal::new(traits);
    let mut atoms = Vec::with_capacity(traits.len() * 2);
    for (i, x) in traits.iter().enumerate() {
        let b = model.total_rate(x, nu, t);
        if b > 0.0 {
            for &(n, p) in model.offspring_law(x, nu, t).atoms() {
                atoms.push((i, n, b * p));
            }
        }
    }
    atoms
}

pub(crate) fn validate_event<M: BranchingModel + ?Sized>(
    model: &M,
    parent: &TraitPoint,
    children: &[TraitPoint],
    time: f64,
) -> Result<()> {
    if children.iter().any(|c| !model.in_domain(c)) {
        return Err(SpinalError::DomainViolation { time });
    }
    if model.mass_conservative() {
        let p = parent.norm_l1();
        let c: f64 = children.iter().map(TraitPoint::norm_l1).sum();
        if c > p * (1.0 + 1e-12) {
            return Err(SpinalError::MassNotConserved { time, parent: p, children: c });
        }
    }
    Ok(())
}

pub fn simulate_direct<M: BranchingModel + ?Sized>(initial: &Population, model: &M, cfg: &DirectRunConfig) -> Result<Trajectory> {
    let mut rng = stream_rng(cfg.seed, cfg.stream);
    simulate_direct_with_rng(initial, model, cfg, &mut rng)
}

pub fn simulate_direct_with_rng<M: BranchingModel + ?Sized>(
    initial: &Population,
    model: &M,
    cfg: &DirectRunConfig,
    rng: &mut dyn RngCore,
) -> Result<Trajectory> {
    cfg.check()?;
    let horizon = cfg.horizon;
    let integ = cfg.flow;
    let full = cfg.record_mode == RecordMode::FullTrajectory;
    let mut pending: Vec<f64> = match &cfg.record_mode {
        RecordMode::Functionals(times) => {
            let mut ts: Vec<f64> = times.iter().copied().filter(|&s| s >= initial.time() && s <= horizon).collect();
            ts.sort_by(f64::total_cmp);
            ts.reverse();
            ts
        }
        _ => Vec::new(),
    };
    let mut snapshots = Vec::new();
    let mut anchor = initial.clone();
    let mut events = Vec::new();
    let mut n_events = 0usize;
    let mut candidates = 0u64;
    let mut extinction_time = if anchor.is_empty() { Some(anchor.time()) } else { None };

    while !anchor.is_empty() {
        let start = anchor.time();
        let acc = thinning::next_event(
            &anchor,
            start,
            horizon,
            model,
            &integ,
            rng,
            |traits, t| Ok(direct_rates(model, traits, t)),
            |p, a, b| model.rate_bound(p, a, b),
            &mut candidates,
        )?;
        let Some(acc) = acc else { break };
        if n_events >= cfg.max_events {
            return Err(SpinalError::EventCapExceeded { cap: cfg.max_events, time: acc.time });
        }
        while pending.last().is_some_and(|&s| s < acc.time) {
            let s = pending.pop().unwrap();
            snapshots.push(Snapshot::of(&advance_traits(&anchor, s, model, &integ)?));
        }
        let nu = Marginal::new(&acc.traits);
        let parent_trait = acc.traits[acc.member].clone();
        let children = model.sample_offspring(acc.n, &parent_trait, nu, acc.time, rng);
        if cfg.validate {
            validate_event(model, &parent_trait, &children, acc.time)?;
        }
        let mut pop = anchor.with_traits(acc.time, acc.traits);
        let parent = pop.labels()[acc.member].clone();
        if full {
            events.push(EventRecord {
                time: acc.time,
                parent,
                n_children: children.len(),
                child_traits: children.clone(),
                spine_involved: false,
                new_spine_index: None,
            });
        }
        pop.branch(acc.member, children);
        if cfg.validate && !pop.labels_are_consistent() {
            return Err(SpinalError::InvalidArgument("label order broken after event".into()));
        }
        anchor = pop;
        n_events += 1;
        if anchor.is_empty() {
            extinction_time = Some(acc.time);
        }
    }
    while let Some(s) = pending.pop() {
        snapshots.push(Snapshot::of(&advance_traits(&anchor, s, model, &integ)?));
    }
    let terminal = advance_traits(&anchor, horizon, model, &integ)?;
    Ok(Trajectory {
        config: cfg.clone(),
        initial: initial.clone(),
        events,
        terminal,
        extinct: extinction_time.is_some(),
        extinction_time,
        n_events,
        n_candidates: candidates,
        snapshots,
    })
}

/// Applies recorded events to `initial`, flowing traits between them, and
/// returns the population at `t`.
pub(crate) fn replay_to<M: BranchingModel + ?Sized>(
    initial: &Population,
    events: &[EventRecord],
    model: &M,
    integ: &FlowIntegrator,
    t: f64,
) -> Result<Population> {
    let mut pop = initial.clone();
    for ev in events.iter().take_while(|e| e.time <= t) {
        pop = advance_traits(&pop, ev.time, model, integ)?;
        let idx = pop.index_of(&ev.parent).ok_or_else(|| SpinalError::UnknownLabel(ev.parent.clone()))?;
        pop.branch(idx, ev.child_traits.clone());
    }
    advance_traits(&pop, t.max(pop.time()), model, integ)
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header { version: String, config: DirectRunConfig, initial: Population },
    Event(EventRecord),
    Summary {
        terminal: Population,
        extinct: bool,
        extinction_time: Option<f64>,
        n_events: usize,
        n_candidates: u64,
        snapshots: Vec<Snapshot>,
    },
}

fn io_err(e: impl std::fmt::Display) -> SpinalError {
    SpinalError::InvalidArgument(format!("trajectory i/o: {e}"))
}

impl Trajectory {
    /// Rebuilds the terminal population from the initial one and the event
    /// log. Exact for runs recorded in full mode.
    pub fn replay<M: BranchingModel + ?Sized>(&self, model: &M) -> Result<Population> {
        self.population_at(self.config.horizon, model)
    }

    pub fn population_at<M: BranchingModel + ?Sized>(&self, t: f64, model: &M) -> Result<Population> {
        if self.config.record_mode != RecordMode::FullTrajectory {
            return Err(SpinalError::RequiresFullTrajectory);
        }
        replay_to(&self.initial, &self.events, model, &self.config.flow, t)
    }

    /// JSON lines: a header with the configuration and initial population,
    /// one line per event, and a closing summary.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Line::Header {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config.clone(),
            initial: self.initial.clone(),
        };
        let mut put = |line: &Line| -> Result<()> {
            serde_json::to_writer(&mut w, line).map_err(io_err)?;
            w.write_all(b"\n").map_err(io_err)
        };
        put(&header)?;
        for ev in &self.events {
            put(&Line::Event(ev.clone()))?;
        }
        put(&Line::Summary {
            terminal: self.terminal.clone(),
            extinct: self.extinct,
            extinction_time: self.extinction_time,
            n_events: self.n_events,
            n_candidates: self.n_candidates,
            snapshots: self.snapshots.clone(),
        })
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trajectory> {
        let mut header = None;
        let mut events = Vec::new();
        for line in r.lines() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Line>(&line).map_err(io_err)? {
                Line::Header { config, initial, .. } => header = Some((config, initial)),
                Line::Event(ev) => events.push(ev),
                Line::Summary { terminal, extinct, extinction_time, n_events, n_candidates, snapshots } => {
                    let (config, initial) = header.take().ok_or_else(|| io_err("summary before header"))?;
                    return Ok(Trajectory {
                        config,
                        initial,
                        events,
                        terminal,
                        extinct,
                        extinction_time,
                        n_events,
                        n_candidates,
                        snapshots,
                    });
                }
            }
        }
        Err(io_err("missing summary line"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstantRateModel, OffspringLaw};

    fn yule() -> ConstantRateModel {
        ConstantRateModel::new(1.0, OffspringLaw::fixed(2)).unwrap()
    }

    #[test]
    fn zero_rate_never_fires() {
        let model = ConstantRateModel::new(0.0, OffspringLaw::fixed(2)).unwrap();
        let pop = Population::from_scalars(0.0, &[1.0]);
        let mut rng = stream_rng(1, 0);
        for _ in 0..10 {
            let ev = next_event_thinning(&pop, &model, &FlowIntegrator::default(), &mut rng, 5.0).unwrap();
            assert!(ev.is_none());
        }
    }

    #[test]
    fn pure_death_goes_extinct_after_n0_events() {
        let model = ConstantRateModel::new(1.0, OffspringLaw::fixed(0)).unwrap();
        let pop = Population::from_scalars(0.0, &[0.0, 0.0, 0.0]);
        let traj = simulate_direct(&pop, &model, &DirectRunConfig::new(1e6, 5)).unwrap();
        assert!(traj.extinct);
        assert_eq!(traj.n_events, 3);
        assert!(traj.terminal.is_empty());
    }

    #[test]
    fn empty_initial_population_is_absorbed() {
        let traj = simulate_direct(&Population::empty(0.0), &yule(), &DirectRunConfig::new(2.0, 5)).unwrap();
        assert!(traj.extinct);
        assert_eq!(traj.extinction_time, Some(0.0));
        assert_eq!(traj.n_events, 0);
    }

    #[test]
    fn event_cap_is_enforced() {
        let pop = Population::from_scalars(0.0, &[0.0]);
        let cfg = DirectRunConfig::new(10.0, 1).with_max_events(50);
        let err = simulate_direct(&pop, &yule(), &cfg).unwrap_err();
        assert!(matches!(err, SpinalError::EventCapExceeded { cap: 50, .. }));
    }

    #[test]
    fn replay_and_jsonl_round_trip() {
        let pop = Population::from_scalars(0.0, &[0.0, 0.0]);
        let traj = simulate_direct(&pop, &yule(), &DirectRunConfig::new(1.5, 9).with_stream(2)).unwrap();
        assert_eq!(traj.replay(&yule()).unwrap(), traj.terminal);
        let text = traj.to_jsonl_string();
        assert_eq!(text.lines().count(), traj.events.len() + 2);
        let back = Trajectory::read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, traj);
        let again = simulate_direct(&pop, &yule(), &DirectRunConfig::new(1.5, 9).with_stream(2)).unwrap();
        assert_eq!(again.to_jsonl_string(), text);
    }

    #[test]
    fn terminal_only_refuses_replay() {
        let pop = Population::from_scalars(0.0, &[0.0]);
        let cfg = DirectRunConfig::new(1.0, 3).with_record_mode(RecordMode::TerminalOnly);
        let traj = simulate_direct(&pop, &yule(), &cfg).unwrap();
        assert!(traj.events.is_empty());
        assert_eq!(traj.replay(&yule()), Err(SpinalError::RequiresFullTrajectory));
    }

    #[test]
    fn functional_snapshots_follow_the_run() {
        let pop = Population::from_scalars(0.0, &[1.0]);
        let cfg = DirectRunConfig::new(2.0, 4).with_record_mode(RecordMode::Functionals(vec![2.0, 0.0, 1.0]));
        let traj = simulate_direct(&pop, &yule(), &cfg).unwrap();
        let times: Vec<f64> = traj.snapshots.iter().map(|s| s.time).collect();
        assert_eq!(times, vec![0.0, 1.0, 2.0]);
        assert_eq!(traj.snapshots[0].size, 1);
        assert_eq!(traj.snapshots[2].size, traj.terminal.len());
    }
}
