//! Girsanov weights, Many-to-One estimators, additive martingales and
//! Monte Carlo aggregation.

pub mod stats;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use stats::{
    chi2_goodness_of_fit, chi2_homogeneity, ks_one_sample, ks_two_sample, two_sample_check, MCEstimate, SampleKind,
    TestReport, DEFAULT_ALPHA,
};

use crate::direct::{replay_to, simulate_direct_with_rng, DirectRunConfig, RecordMode, Trajectory};
use crate::error::{Result, SpinalError};
use crate::flow::{accumulate_log_weight, advance_traits, FlowIntegrator};
use crate::label::Label;
use crate::model::BranchingModel;
use crate::population::Population;
use crate::rng::ReplicaRunner;
use crate::spine::{ln_psi_mass, simulate_spine_with_rng, SpineTrajectory};
use crate::weight::WeightFunction;

/// Rule `p_u(Z̄_t)` for sampling one individual of the population.
pub trait SamplingRule: Send + Sync {
    fn prob(&self, label: &Label, pop: &Population) -> f64;
}

/// `p_u = 1 / |𝔾(t)|`.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformSampling;

impl SamplingRule for UniformSampling {
    fn prob(&self, label: &Label, pop: &Population) -> f64 {
        if pop.index_of(label).is_some() {
            1.0 / pop.len() as f64
        } else {
            0.0
        }
    }
}

/// Functional `f(u, Z̄_t)` of an individual and the terminal population.
pub type Functional = dyn Fn(&Label, &Population) -> f64 + Send + Sync;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub replica: u64,
    /// `f(E_t, Ẑ̄_t)`.
    pub value: f64,
    /// `ξ = p_{E_t} exp(∫ 𝒢ψ/ψ) / ψ(Y_t, χ_t, t)`.
    pub xi: f64,
    pub log_weight: f64,
}

/// Girsanov weight `ξ` of a spine trajectory, assembled in log space.
pub fn xi_weight(traj: &SpineTrajectory, sampling: &dyn SamplingRule) -> f64 {
    let p = sampling.prob(traj.spine_label(), traj.terminal.population());
    (p.ln() + traj.log_weight - traj.ln_terminal_psi).exp()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub horizon: f64,
    pub replicas: usize,
    pub seed: u64,
    /// Worker threads; `0` uses the default pool.
    pub threads: usize,
    pub flow: FlowIntegrator,
    pub max_events: usize,
}

impl EstimatorConfig {
    pub fn new(horizon: f64, replicas: usize, seed: u64) -> Self {
        EstimatorConfig {
            horizon,
            replicas,
            seed,
            threads: 0,
            flow: FlowIntegrator::default(),
            max_events: DirectRunConfig::DEFAULT_MAX_EVENTS,
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    pub fn run_config(&self, replica: u64, mode: RecordMode) -> DirectRunConfig {
        DirectRunConfig {
            horizon: self.horizon,
            max_events: self.max_events,
            seed: self.seed,
            stream: replica,
            record_mode: mode,
            flow: self.flow,
            validate: false,
        }
    }

    /// Runner over the replicas of this configuration.
    pub fn runner(&self) -> Result<ReplicaRunner> {
        if self.replicas == 0 {
            return Err(SpinalError::InvalidArgument("replicas must be >= 1".into()));
        }
        Ok(ReplicaRunner::new(self.seed).with_threads(self.threads))
    }
}

/// Runs spine replicas and returns, per replica, `f(E_t, Ẑ̄_t)` with its weights.
pub fn spine_samples(
    model: &dyn BranchingModel,
    wf: &dyn WeightFunction,
    initial: &Population,
    cfg: &EstimatorConfig,
    f: &Functional,
    sampling: &dyn SamplingRule,
) -> Result<Vec<WeightedSample>> {
    cfg.runner()?.run(cfg.replicas, |i, rng| {
        let run = cfg.run_config(i, RecordMode::TerminalOnly);
        let traj = simulate_spine_with_rng(initial, model, wf, &run, rng)?;
        let value = f(traj.spine_label(), traj.terminal.population());
        if !(value >= 0.0) {
            return Err(SpinalError::NegativeFunctional(value));
        }
        Ok(WeightedSample { replica: i, value, xi: xi_weight(&traj, sampling), log_weight: traj.log_weight })
    })
}

/// Spine estimate of `E[Σ_{u ∈ 𝔾(t)} ψ(X^u_t, ν_t, t) f(u, Z̄_t)]` as
/// `⟨z, ψ(·, z, 0)⟩ · mean(exp(∫ 𝒢ψ/ψ) f(E_t, Ẑ̄_t))`.
pub fn many_to_one_estimate(
    model: &dyn BranchingModel,
    wf: &dyn WeightFunction,
    initial: &Population,
    cfg: &EstimatorConfig,
    f: &Functional,
) -> Result<MCEstimate> {
    let samples = spine_samples(model, wf, initial, cfg, f, &UniformSampling)?;
    let xs: Vec<f64> = samples.iter().map(|s| s.log_weight.exp() * s.value).collect();
    Ok(MCEstimate::from_samples(&xs)?.scaled(ln_psi_mass(wf, initial).exp()))
}

/// Spine estimate of `E[H(U_t, Z̄_t) 1{𝔾(t) ≠ ∅}]`, where `U_t` is drawn by
/// `sampling`, as `⟨z, ψ(·, z, 0)⟩ · mean(ξ H(E_t, Ẑ̄_t))`.
pub fn sampled_individual_estimate(
    model: &dyn BranchingModel,
    wf: &dyn WeightFunction,
    initial: &Population,
    cfg: &EstimatorConfig,
    h: &Functional,
    sampling: &dyn SamplingRule,
) -> Result<MCEstimate> {
    let samples = spine_samples(model, wf, initial, cfg, h, sampling)?;
    let xs: Vec<f64> = samples.iter().map(|s| s.xi * s.value).collect();
    Ok(MCEstimate::from_samples(&xs)?.scaled(ln_psi_mass(wf, initial).exp()))
}

/// `Σ_u ψ(X^u_t, ν_t, t) f(u, Z̄_t)` on a terminal population.
pub fn psi_weighted_sum(wf: &dyn WeightFunction, pop: &Population, f: &Functional) -> Result<f64> {
    let nu = pop.marginal();
    let mut acc = 0.0;
    for (label, x) in pop.members() {
        let v = f(label, pop);
        if !(v >= 0.0) {
            return Err(SpinalError::NegativeFunctional(v));
        }
        if v != 0.0 {
            acc += wf.psi(x, nu, pop.time()) * v;
        }
    }
    Ok(acc)
}

/// Direct-simulation estimate of `E[Σ_{u ∈ 𝔾(t)} ψ(X^u_t, ν_t, t) f(u, Z̄_t)]`.
pub fn direct_estimate<M: BranchingModel + ?Sized>(
    model: &M,
    wf: &dyn WeightFunction,
    initial: &Population,
    cfg: &EstimatorConfig,
    f: &Functional,
) -> Result<MCEstimate> {
    let xs = cfg.runner()?.run(cfg.replicas, |i, rng| {
        let run = cfg.run_config(i, RecordMode::TerminalOnly);
        let traj = simulate_direct_with_rng(initial, model, &run, rng)?;
        psi_weighted_sum(wf, &traj.terminal, f)
    })?;
    MCEstimate::from_samples(&xs)
}

/// Additive martingale `W_t(ψ) = Σ_u exp(-∫_0^t 𝒢ψ/ψ along u's lineage) ψ(X^u_t, ν_t, t)`
/// evaluated at every time in `times` from one fully recorded direct run.
///
/// Lineage integrals are recomputed from the event log: between events each
/// member accumulates the integral with itself in the spinal role, and
/// children inherit the parent's accumulated value.
pub fn martingale_w_path(
    traj: &Trajectory,
    model: &dyn BranchingModel,
    wf: &dyn WeightFunction,
    times: &[f64],
) -> Result<Vec<f64>> {
    if traj.config.record_mode != RecordMode::FullTrajectory {
        return Err(SpinalError::RequiresFullTrajectory);
    }
    let integ = traj.config.flow;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut out = vec![0.0; times.len()];
    let mut pop = traj.initial.clone();
    let mut acc = vec![0.0; pop.len()];
    let mut events = traj.events.iter().peekable();
    for k in order {
        let t = times[k];
        if t > traj.config.horizon || t < traj.initial.time() {
            return Err(SpinalError::InvalidArgument(format!(
                "time {t} outside the recorded window [{}, {}]",
                traj.initial.time(),
                traj.config.horizon
            )));
        }
        while let Some(ev) = events.next_if(|e| e.time <= t) {
            accumulate_all(&pop, &mut acc, model, wf, &integ, ev.time)?;
            pop = advance_traits(&pop, ev.time, model, &integ)?;
            let idx = pop.index_of(&ev.parent).ok_or_else(|| SpinalError::UnknownLabel(ev.parent.clone()))?;
            let inherited = acc[idx];
            acc.splice(idx..=idx, std::iter::repeat_n(inherited, ev.n_children));
            pop.branch(idx, ev.child_traits.clone());
        }
        accumulate_all(&pop, &mut acc, model, wf, &integ, t)?;
        pop = advance_traits(&pop, t, model, &integ)?;
        let nu = pop.marginal();
        out[k] = pop.traits().iter().zip(&acc).map(|(x, a)| (wf.ln_psi(x, nu, t) - a).exp()).sum();
    }
    Ok(out)
}

fn accumulate_all(
    pop: &Population,
    acc: &mut [f64],
    model: &dyn BranchingModel,
    wf: &dyn WeightFunction,
    integ: &FlowIntegrator,
    t1: f64,
) -> Result<()> {
    if t1 <= pop.time() {
        return Ok(());
    }
    for (i, a) in acc.iter_mut().enumerate() {
        *a += accumulate_log_weight(pop, i, model, wf, integ, t1)?;
    }
    Ok(())
}

pub fn martingale_w(traj: &Trajectory, model: &dyn BranchingModel, wf: &dyn WeightFunction, t: f64) -> Result<f64> {
    Ok(martingale_w_path(traj, model, wf, &[t])?[0])
}

/// Monte Carlo estimates of `E[W_t(ψ)]` at each time in `times`.
pub fn martingale_estimates(
    model: &dyn BranchingModel,
    wf: &dyn WeightFunction,
    initial: &Population,
    cfg: &EstimatorConfig,
    times: &[f64],
) -> Result<Vec<MCEstimate>> {
    let paths = cfg.runner()?.run(cfg.replicas, |i, rng| {
        let run = cfg.run_config(i, RecordMode::FullTrajectory);
        let traj = simulate_direct_with_rng(initial, model, &run, rng)?;
        martingale_w_path(&traj, model, wf, times)
    })?;
    (0..times.len())
        .map(|k| MCEstimate::from_samples(&paths.iter().map(|p| p[k]).collect::<Vec<_>>()))
        .collect()
}

/// Population of a full direct trajectory at time `t`.
pub fn population_at(traj: &Trajectory, model: &dyn BranchingModel, t: f64) -> Result<Population> {
    if traj.config.record_mode != RecordMode::FullTrajectory {
        return Err(SpinalError::RequiresFullTrajectory);
    }
    replay_to(&traj.initial, &traj.events, model, &traj.config.flow, t)
}

/// One row of the estimate CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub name: String,
    pub mean: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
    pub seed: u64,
}

impl EstimateRow {
    pub fn new(name: impl Into<String>, est: &MCEstimate, seed: u64) -> Self {
        EstimateRow {
            name: name.into(),
            mean: est.mean,
            se: est.std_error,
            ci_lo: est.ci95.0,
            ci_hi: est.ci95.1,
            n: est.n_replicas,
            seed,
        }
    }
}

/// Writes rows with the header `name,mean,se,ci_lo,ci_hi,n,seed`.
pub fn write_estimates_csv<W: Write>(w: W, rows: &[EstimateRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row).map_err(|e| SpinalError::InvalidArgument(format!("csv: {e}")))?;
    }
    out.flush().map_err(|e| SpinalError::InvalidArgument(format!("csv: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstantRateModel, OffspringLaw};
    use crate::population::SpineState;
    use crate::spine::simulate_spine_from;
    use crate::weight::UnitWeight;

    #[test]
    fn xi_at_time_zero_is_uniform_probability() {
        let model = ConstantRateModel::new(1.0, OffspringLaw::fixed(2)).unwrap();
        let state = SpineState::new(Label::ancestor(2), Population::from_scalars(0.0, &[0.0; 4])).unwrap();
        let traj = simulate_spine_from(&state, &model, &UnitWeight, &DirectRunConfig::new(0.0, 1)).unwrap();
        assert_eq!(xi_weight(&traj, &UniformSampling), 0.25);
    }

    #[test]
    fn zero_functional_has_zero_variance() {
        let model = ConstantRateModel::new(1.0, OffspringLaw::fixed(2)).unwrap();
        let pop = Population::from_scalars(0.0, &[0.0]);
        let est = many_to_one_estimate(&model, &UnitWeight, &pop, &EstimatorConfig::new(1.0, 50, 3), &|_, _| 0.0).unwrap();
        assert_eq!((est.mean, est.std_error), (0.0, 0.0));
    }

    #[test]
    fn negative_functional_is_rejected() {
        let model = ConstantRateModel::new(1.0, OffspringLaw::fixed(2)).unwrap();
        let pop = Population::from_scalars(0.0, &[0.0]);
        let err = many_to_one_estimate(&model, &UnitWeight, &pop, &EstimatorConfig::new(1.0, 5, 3), &|_, _| -1.0);
        assert_eq!(err, Err(SpinalError::NegativeFunctional(-1.0)));
    }

    #[test]
    fn unit_martingale_at_time_zero_is_population_size() {
        let model = ConstantRateModel::new(1.0, OffspringLaw::fixed(2)).unwrap();
        let pop = Population::from_scalars(0.0, &[0.0; 3]);
        let traj = crate::direct::simulate_direct(&pop, &model, &DirectRunConfig::new(1.0, 2)).unwrap();
        assert_eq!(martingale_w(&traj, &model, &UnitWeight, 0.0).unwrap(), 3.0);
        // With ψ ≡ 1 and B(m - 1) = 1, W_t = |𝔾(t)| e^{-t}.
        let w = martingale_w(&traj, &model, &UnitWeight, 1.0).unwrap();
        assert!((w - traj.terminal.len() as f64 * (-1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn csv_layout() {
        let est = MCEstimate::from_samples(&[1.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_estimates_csv(&mut buf, &[EstimateRow::new("size", &est, 7)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("name,mean,se,ci_lo,ci_hi,n,seed\nsize,2.0,1.0,"));
    }
}
