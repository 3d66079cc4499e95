//! Fast simulation of the Yule spine process: a unit-rate binary tree
//! followed by Poisson loss events laid on its branches.
//!
//! Individual indices are one-based, and each new individual is appended at
//! the end of the list.

use std::io::Write;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpinalError};
use crate::label::Label;
use crate::population::{Population, SpineState};
use crate::rng::ReplicaRunner;
use crate::thinning::exp_draw;
use crate::time_fn::TimeFn;

use super::params::YuleParams;
use super::weight::segment_log_weight;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeOutput {
    /// `t1` followed by the division times.
    pub t_div: Vec<f64>,
    pub i_div: Vec<usize>,
    /// Spine index at the end of the window.
    pub e: usize,
    pub l_div: Vec<f64>,
    /// Spine index on each inter-division interval (`t_div.len()` entries).
    pub spine_by_interval: Vec<usize>,
}

/// Unit-rate-per-individual binary tree on `[t1, t2]` started from `n`
/// individuals with the spine at index `i0`.
///
/// When the spine divides with fraction `λ` it moves to the appended child,
/// whose fraction is `1 - λ`, with probability `1 - λ`.
pub fn tree(t1: f64, t2: f64, n: usize, i0: usize, inv_cdf_div: &dyn Fn(f64) -> f64, rng: &mut dyn RngCore) -> TreeOutput {
    assert!(t1 <= t2 && n >= 1 && (1..=n).contains(&i0));
    let mut t_div = vec![t1];
    let mut i_div = Vec::new();
    let mut l_div = Vec::new();
    let mut e = i0;
    let mut spine_by_interval = vec![e];
    let mut t = t1;
    loop {
        let size = n + i_div.len();
        t += exp_draw(rng, size as f64);
        if t > t2 {
            break;
        }
        let i = 1 + (rng.random::<f64>() * size as f64) as usize;
        let l = inv_cdf_div(rng.random::<f64>());
        let p = rng.random::<f64>();
        if e == i && p > l {
            e = size + 1;
        }
        t_div.push(t);
        i_div.push(i.min(size));
        l_div.push(l);
        spine_by_interval.push(e);
    }
    TreeOutput { t_div, i_div, e, l_div, spine_by_interval }
}

/// Labels of the individuals in the order they were appended, after the
/// divisions `i_div` applied to `n` initial individuals.
pub fn labels_unsorted(i_div: &[usize], n: usize) -> Result<Vec<Label>> {
    let mut u: Vec<Label> = (1..=n as u32).map(Label::ancestor).collect();
    for &i in i_div {
        if i == 0 || i > u.len() {
            return Err(SpinalError::IndexOutOfRange { index: i, len: u.len() });
        }
        let parent = u[i - 1].clone();
        u[i - 1] = parent.child(1);
        u.push(parent.child(2));
    }
    Ok(u)
}

/// Ulam-Harris labels after the divisions `i_div`, sorted lexicographically.
pub fn labels(i_div: &[usize], n: usize) -> Result<Vec<Label>> {
    let mut u = labels_unsorted(i_div, n)?;
    u.sort();
    Ok(u)
}

/// Event times of a Poisson process with intensity `coef · d(s)` on `[a, b)`,
/// by Lewis thinning when `d` is not constant.
fn poisson_times(a: f64, b: f64, coef: f64, d: &TimeFn, rng: &mut dyn RngCore) -> Vec<f64> {
    let mut out = Vec::new();
    if coef <= 0.0 || b <= a {
        return out;
    }
    if let Some(dc) = d.as_constant() {
        let rate = coef * dc;
        if rate <= 0.0 {
            return out;
        }
        let mut t = a + exp_draw(rng, rate);
        while t < b {
            out.push(t);
            t += exp_draw(rng, rate);
        }
        return out;
    }
    let sup = coef * d.sup(a, b);
    if sup <= 0.0 {
        return out;
    }
    let mut t = a + exp_draw(rng, sup);
    while t < b {
        if rng.random::<f64>() * sup < coef * d.value(t) {
            out.push(t);
        }
        t += exp_draw(rng, sup);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastSimOutput {
    pub n0: usize,
    pub horizon: f64,
    pub t_div: Vec<f64>,
    pub i_div: Vec<usize>,
    pub l_div: Vec<f64>,
    /// Final spine index.
    pub e: usize,
    pub spine_by_interval: Vec<usize>,
    /// Loss events of individuals outside the spine.
    pub t_loss: Vec<f64>,
    pub i_loss: Vec<usize>,
    pub l_loss: Vec<f64>,
    /// Loss events of the spinal individual.
    pub t_loss_star: Vec<f64>,
    pub i_loss_star: Vec<usize>,
    pub l_loss_star: Vec<f64>,
    /// Sorted labels of the individuals alive at the horizon.
    pub u: Vec<Label>,
    pub spine_label: Label,
}

impl FastSimOutput {
    pub fn division_count(&self) -> usize {
        self.i_div.len()
    }

    pub fn event_count(&self) -> usize {
        self.i_div.len() + self.t_loss.len() + self.t_loss_star.len()
    }

    /// Every event in time order as `(time, one-based index, fraction, is_division)`.
    fn merged_events(&self) -> Vec<(f64, usize, f64, bool)> {
        let mut ev: Vec<(f64, usize, f64, bool)> = Vec::with_capacity(self.event_count());
        for k in 0..self.i_div.len() {
            ev.push((self.t_div[k + 1], self.i_div[k], self.l_div[k], true));
        }
        for k in 0..self.t_loss.len() {
            ev.push((self.t_loss[k], self.i_loss[k], self.l_loss[k], false));
        }
        for k in 0..self.t_loss_star.len() {
            ev.push((self.t_loss_star[k], self.i_loss_star[k], self.l_loss_star[k], false));
        }
        ev.sort_by(|a, b| a.0.total_cmp(&b.0));
        ev
    }
}

/// Simulates the spine process of the Yule model on `[0, horizon]` from the
/// initial masses `z`.
///
/// Losses outside the spine arrive at rate `K_loss d(t) S (S - 1)` with a
/// victim drawn uniformly among the `S - 1` individuals outside the spine;
/// the spine loses mass at rate `d(t) S`.
pub fn simulate_fast(params: &YuleParams, z: &[f64], horizon: f64, rng: &mut dyn RngCore) -> Result<FastSimOutput> {
    if z.is_empty() {
        return Err(SpinalError::InvalidArgument("initial population must be nonempty".into()));
    }
    if z.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(SpinalError::InvalidArgument("initial masses must be positive and finite".into()));
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(SpinalError::InvalidArgument(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    let n = z.len();
    let total: f64 = z.iter().sum();
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    let mut i0 = n;
    for (i, &x) in z.iter().enumerate() {
        acc += x / total;
        if u < acc {
            i0 = i + 1;
            break;
        }
    }
    let q_hat = params.division_biased.clone();
    let tr = tree(0.0, horizon, n, i0, &|v| q_hat.inverse_cdf(v), rng);

    let (mut t_loss, mut i_loss, mut l_loss) = (Vec::new(), Vec::new(), Vec::new());
    let (mut t_star, mut i_star, mut l_star) = (Vec::new(), Vec::new(), Vec::new());
    for k in 0..tr.t_div.len() {
        let a = tr.t_div[k];
        let b = tr.t_div.get(k + 1).copied().unwrap_or(horizon);
        let s = n + k;
        let e = tr.spine_by_interval[k];
        let sf = s as f64;
        for t in poisson_times(a, b, params.k_loss * sf * (sf - 1.0), &params.d, rng) {
            let mut v = 1 + (rng.random::<f64>() * (s - 1) as f64) as usize;
            v = v.min(s - 1);
            if v >= e {
                v += 1;
            }
            t_loss.push(t);
            i_loss.push(v);
            l_loss.push(params.loss_biased.inverse_cdf(rng.random::<f64>()));
        }
        for t in poisson_times(a, b, sf, &params.d, rng) {
            t_star.push(t);
            i_star.push(e);
            l_star.push(params.loss.inverse_cdf(rng.random::<f64>()));
        }
    }
    let unsorted = labels_unsorted(&tr.i_div, n)?;
    let spine_label = unsorted[tr.e - 1].clone();
    let mut sorted = unsorted;
    sorted.sort();
    Ok(FastSimOutput {
        n0: n,
        horizon,
        t_div: tr.t_div,
        i_div: tr.i_div,
        l_div: tr.l_div,
        e: tr.e,
        spine_by_interval: tr.spine_by_interval,
        t_loss,
        i_loss,
        l_loss,
        t_loss_star: t_star,
        i_loss_star: i_star,
        l_loss_star: l_star,
        u: sorted,
        spine_label,
    })
}

/// Masses of the living individuals at each query time, sorted by label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraitTable {
    pub times: Vec<f64>,
    pub rows: Vec<Vec<(Label, f64)>>,
}

impl TraitTable {
    pub fn mass_of(&self, k: usize, label: &Label) -> Result<f64> {
        let row = self.rows.get(k).ok_or(SpinalError::IndexOutOfRange { index: k, len: self.rows.len() })?;
        row.binary_search_by(|(l, _)| l.cmp(label))
            .map(|i| row[i].1)
            .map_err(|_| SpinalError::UnknownLabel(label.clone()))
    }

    pub fn population(&self, k: usize) -> Population {
        let members = self.rows[k].iter().map(|(l, m)| (l.clone(), (*m).into())).collect();
        Population::from_members(self.times[k], members).expect("labels are distinct")
    }
}

/// Masses at `times`: birth mass, times the growth `exp(∫μ)`, times every
/// division and loss fraction met along the lineage.
pub fn reconstruct_traits(out: &FastSimOutput, params: &YuleParams, z: &[f64], times: &[f64]) -> Result<TraitTable> {
    if z.len() != out.n0 {
        return Err(SpinalError::InvalidArgument(format!("{} initial masses for {} individuals", z.len(), out.n0)));
    }
    let events = out.merged_events();
    let mut masses = z.to_vec();
    let mut labels: Vec<Label> = (1..=z.len() as u32).map(Label::ancestor).collect();
    let mut next = 0;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut rows = vec![Vec::new(); times.len()];
    for k in order {
        let t = times[k];
        while next < events.len() && events[next].0 <= t {
            let (_, i, f, is_div) = events[next];
            if i == 0 || i > masses.len() {
                return Err(SpinalError::IndexOutOfRange { index: i, len: masses.len() });
            }
            let m = masses[i - 1];
            if is_div {
                masses[i - 1] = f * m;
                masses.push((1.0 - f) * m);
                let parent = labels[i - 1].clone();
                labels[i - 1] = parent.child(1);
                labels.push(parent.child(2));
            } else {
                masses[i - 1] = f * m;
            }
            next += 1;
        }
        let growth = params.mu.integral(0.0, t).exp();
        let mut row: Vec<(Label, f64)> = labels.iter().cloned().zip(masses.iter().map(|m| m * growth)).collect();
        row.sort_by(|a, b| a.0.cmp(&b.0));
        rows[k] = row;
    }
    Ok(TraitTable { times: times.to_vec(), rows })
}

/// Statistics of one fast run needed by the estimators and comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FastSpineSummary {
    pub division_count: usize,
    /// Divisions along the spine lineage.
    pub spine_division_depth: usize,
    pub spine_mass: f64,
    pub spine_label: Label,
    pub population_size: usize,
    /// `∫_0^T 𝒢ψ/ψ ds` along the run.
    pub log_weight: f64,
    /// `ln ψ` at the horizon.
    pub ln_terminal_psi: f64,
    pub event_count: usize,
}

pub fn summarize(out: &FastSimOutput, params: &YuleParams, z: &[f64]) -> Result<FastSpineSummary> {
    let table = reconstruct_traits(out, params, z, &[out.horizon])?;
    let spine_mass = table.mass_of(0, &out.spine_label)?;
    let mut s = out.n0;
    let mut mass: f64 = z.iter().sum();
    let mut t = 0.0;
    let mut log_weight = 0.0;
    let mut masses = z.to_vec();
    for (te, i, f, is_div) in out.merged_events() {
        log_weight += segment_log_weight(params, s, mass * params.mu.integral(0.0, t).exp(), t, te);
        t = te;
        let m = masses[i - 1];
        if is_div {
            masses[i - 1] = f * m;
            masses.push((1.0 - f) * m);
            s += 1;
        } else {
            masses[i - 1] = f * m;
            mass -= (1.0 - f) * m;
        }
    }
    log_weight += segment_log_weight(params, s, mass * params.mu.integral(0.0, t).exp(), t, out.horizon);
    let pop = table.population(0);
    let x_e = spine_mass;
    let r_t = params.r.value(out.horizon);
    let ln_terminal_psi = x_e.ln()
        - pop.len() as f64 * (r_t * params.k_div).ln()
        - pop.traits().iter().map(|x| x.value().ln()).sum::<f64>();
    Ok(FastSpineSummary {
        division_count: out.division_count(),
        spine_division_depth: out.spine_label.depth() - 1,
        spine_mass,
        spine_label: out.spine_label.clone(),
        population_size: pop.len(),
        log_weight,
        ln_terminal_psi,
        event_count: out.event_count(),
    })
}

/// Terminal spine state reconstructed from a fast run.
pub fn terminal_state(out: &FastSimOutput, params: &YuleParams, z: &[f64]) -> Result<SpineState> {
    let table = reconstruct_traits(out, params, z, &[out.horizon])?;
    SpineState::new(out.spine_label.clone(), table.population(0))
}

/// Runs `replicas` independent fast simulations on the streams of `seed`.
pub fn fast_summaries(
    params: &YuleParams,
    z: &[f64],
    horizon: f64,
    replicas: usize,
    seed: u64,
    threads: usize,
) -> Result<Vec<FastSpineSummary>> {
    ReplicaRunner::new(seed).with_threads(threads).run(replicas, |_, rng| {
        let out = simulate_fast(params, z, horizon, rng)?;
        summarize(&out, params, z)
    })
}

#[derive(Serialize)]
struct TreeRow {
    label: String,
    birth_time: f64,
    parent: String,
    fraction: Option<f64>,
}

/// CSV table `label,birth_time,parent,fraction` of every individual of the
/// tree, including those that have since divided.
pub fn write_tree_csv<W: Write>(out: &FastSimOutput, w: W) -> Result<()> {
    let mut rows = Vec::new();
    for i in 1..=out.n0 as u32 {
        rows.push(TreeRow { label: Label::ancestor(i).to_string(), birth_time: 0.0, parent: String::new(), fraction: None });
    }
    let mut u: Vec<Label> = (1..=out.n0 as u32).map(Label::ancestor).collect();
    for (k, &i) in out.i_div.iter().enumerate() {
        let parent = u[i - 1].clone();
        let t = out.t_div[k + 1];
        let l = out.l_div[k];
        for (c, f) in [(1, l), (2, 1.0 - l)] {
            rows.push(TreeRow {
                label: parent.child(c).to_string(),
                birth_time: t,
                parent: parent.to_string(),
                fraction: Some(f),
            });
        }
        u[i - 1] = parent.child(1);
        u.push(parent.child(2));
    }
    let mut wr = csv::Writer::from_writer(w);
    for row in rows {
        wr.serialize(row).map_err(|e| SpinalError::InvalidArgument(format!("csv: {e}")))?;
    }
    wr.flush().map_err(|e| SpinalError::InvalidArgument(format!("csv: {e}")))
}
