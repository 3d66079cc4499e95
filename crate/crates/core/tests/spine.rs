//! Distributional checks of the spine process.

use spinal::estimator::stats::{two_sample_check, SampleKind};
use spinal::rng::stream_rng;
use spinal::spine::{sample_spine_children, sample_spine_event, simulate_spine_with_rng};
use spinal::yule::{yule_model, yule_weight, YuleParams};
use spinal::{
    simulate_direct, ConstantRateModel, DirectRunConfig, Label, OffspringLaw, Population, SpineState, UnitWeight,
};

#[test]
fn unit_weight_spine_child_is_uniform() {
    let model = ConstantRateModel::new(1.0, OffspringLaw::fixed(2)).unwrap();
    let state = SpineState::new(Label::ancestor(1), Population::from_scalars(0.0, &[0.0, 0.0])).unwrap();
    let mut rng = stream_rng(21, 0);
    let (mut spine_events, mut first) = (0u32, 0u32);
    for _ in 0..40_000 {
        let ev = sample_spine_event(&state, &model, &UnitWeight, &mut rng).unwrap();
        if let Some(j) = ev.new_spine_index {
            spine_events += 1;
            first += u32::from(j == 0);
        }
    }
    let n = spine_events as f64;
    let freq = first as f64 / n;
    assert!((freq - 0.5).abs() < 3.0 * (0.25 / n).sqrt(), "first-child frequency {freq} over {n}");
}

#[test]
fn yule_spine_follows_a_child_with_probability_its_fraction() {
    let params = YuleParams::constant(1.0, 0.1, 0.0, (2.0, 2.0), (2.0, 1.0)).unwrap();
    let (model, weight) = (yule_model(params.clone()), yule_weight(params));
    let pop = Population::from_scalars(0.0, &[1.5, 0.5]);
    let mut rng = stream_rng(22, 0);
    const BINS: usize = 10;
    let mut hits = [0f64; BINS];
    let mut counts = [0f64; BINS];
    let mut sum_l = [0f64; BINS];
    for _ in 0..100_000 {
        let (children, j) = sample_spine_children(&model, &weight, 0, 0, 2, pop.marginal(), 0.0, &mut rng).unwrap();
        let l = children[0].value() / 1.5;
        let b = ((l * BINS as f64) as usize).min(BINS - 1);
        counts[b] += 1.0;
        sum_l[b] += l;
        hits[b] += f64::from(u8::from(j == Some(0)));
    }
    for b in 0..BINS {
        let (p, lbar) = (hits[b] / counts[b], sum_l[b] / counts[b]);
        let se = (lbar * (1.0 - lbar) / counts[b]).sqrt();
        assert!((p - lbar).abs() < 4.0 * se + 1e-3, "bin {b}: follows {p} vs fraction {lbar}");
    }
    // Biased division fraction is uniform, so the bins are evenly filled.
    for c in counts {
        assert!((c - 10_000.0).abs() < 4.0 * 10_000f64.sqrt(), "bin count {c}");
    }
}

#[test]
fn zero_rate_spine_has_no_events_and_zero_weight() {
    let model = ConstantRateModel::new(0.0, OffspringLaw::fixed(2)).unwrap();
    let z = Population::from_scalars(0.0, &[0.0, 0.0]);
    let mut rng = stream_rng(23, 0);
    let traj = simulate_spine_with_rng(&z, &model, &UnitWeight, &DirectRunConfig::new(3.0, 23), &mut rng).unwrap();
    assert!(traj.events.is_empty());
    assert_eq!(traj.log_weight, 0.0);
}

#[test]
fn fixed_seed_gives_identical_spine_trajectories() {
    let params = YuleParams::constant(1.0, 0.2, 0.1, (2.0, 2.0), (2.0, 1.0)).unwrap();
    let (model, weight) = (yule_model(params.clone()), yule_weight(params));
    let z = Population::from_scalars(0.0, &[1.0, 2.0]);
    let cfg = DirectRunConfig::new(1.5, 24).with_stream(3);
    let a = spinal::simulate_spine(&z, &model, &weight, &cfg).unwrap();
    let b = spinal::simulate_spine(&z, &model, &weight, &cfg).unwrap();
    assert_eq!(a.to_jsonl_string(), b.to_jsonl_string());
}

/// Individuals outside the spine branch as in the original process: from
/// five roots, the first branching among the four roots that do not carry the
/// spine is the first event of a direct run from four roots.
#[test]
fn unit_weight_outside_individuals_are_unbiased() {
    let model = ConstantRateModel::new(1.0, OffspringLaw::from_pairs(&[(0, 0.5), (2, 0.5)]).unwrap()).unwrap();
    let horizon = 10.0;
    let n = 5_000;
    let mut spine_times = Vec::with_capacity(n);
    let mut spine_counts = Vec::new();
    let five = Population::from_scalars(0.0, &[0.0; 5]);
    for i in 0..n as u64 {
        let mut rng = stream_rng(25, i);
        let cfg = DirectRunConfig::new(horizon, 25).with_stream(i);
        let traj = simulate_spine_with_rng(&five, &model, &UnitWeight, &cfg, &mut rng).unwrap();
        let spine_root = traj.initial.spine().clone();
        let first = traj
            .events
            .iter()
            .find(|e| e.parent.depth() == 1 && e.parent != spine_root)
            .expect("an outside root branches before the horizon");
        spine_times.push(first.time);
        spine_counts.push(first.n_children as f64);
    }
    let mut direct_times = Vec::with_capacity(n);
    let mut direct_counts = Vec::new();
    let four = Population::from_scalars(0.0, &[0.0; 4]);
    for i in 0..n as u64 {
        let traj = simulate_direct(&four, &model, &DirectRunConfig::new(horizon, 26).with_stream(i)).unwrap();
        let first = &traj.events[0];
        direct_times.push(first.time);
        direct_counts.push(first.n_children as f64);
    }
    let times = two_sample_check(&spine_times, &direct_times, SampleKind::Continuous, 0.01).unwrap();
    let counts = two_sample_check(&spine_counts, &direct_counts, SampleKind::Categorical, 0.01).unwrap();
    assert!(times.pass, "{times:?}");
    assert!(counts.pass, "{counts:?}");
}
