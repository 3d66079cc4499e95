//! Weight assembly, many-to-one estimates, martingales and the two-sample check.

use rand::Rng;
use spinal::estimator::stats::{two_sample_check, SampleKind};
use spinal::estimator::{
    direct_estimate, many_to_one_estimate, martingale_estimates, spine_samples, xi_weight, EstimatorConfig,
    UniformSampling,
};
use spinal::rng::stream_rng;
use spinal::yule::{yule_model, yule_weight, YuleParams};
use spinal::{simulate_spine, ConstantRateModel, DirectRunConfig, Label, OffspringLaw, Population, UnitWeight, WeightFunction};

fn law() -> OffspringLaw {
    OffspringLaw::from_pairs(&[(0, 0.25), (2, 0.25), (3, 0.5)]).unwrap()
}

#[test]
fn unit_weight_xi_is_sampling_probability_times_mean_growth() {
    let model = ConstantRateModel::new(1.5, law()).unwrap();
    let z = Population::from_scalars(0.0, &[0.0, 0.0]);
    let t = 1.2;
    let growth = (t * 1.5 * (law().mean() - 1.0)).exp();
    for stream in 0..20 {
        let traj = simulate_spine(&z, &model, &UnitWeight, &DirectRunConfig::new(t, 41).with_stream(stream)).unwrap();
        let expected = growth / traj.terminal.population().len() as f64;
        let xi = xi_weight(&traj, &UniformSampling);
        assert!((xi / expected - 1.0).abs() < 1e-12, "xi {xi} vs {expected}");
    }
}

#[test]
fn unit_weight_many_to_one_is_the_mean_size_formula() {
    let model = ConstantRateModel::new(1.5, law()).unwrap();
    let z = Population::from_scalars(0.0, &[0.0, 0.0, 0.0]);
    let cfg = EstimatorConfig::new(0.8, 200, 42);
    let est = many_to_one_estimate(&model, &UnitWeight, &z, &cfg, &|_, _| 1.0).unwrap();
    let target = model.mean_size(3, 0.8);
    assert!((est.mean / target - 1.0).abs() < 1e-12, "{} vs {target}", est.mean);
    assert!(est.std_error < 1e-12 * target);
}

#[test]
fn xi_is_positive_on_every_sample() {
    let params = YuleParams::constant(1.0, 0.1, 0.0, (2.0, 2.0), (2.0, 1.0)).unwrap();
    let (model, weight) = (yule_model(params.clone()), yule_weight(params));
    let z = Population::from_scalars(0.0, &[1.0, 0.5]);
    let samples =
        spine_samples(&model, &weight, &z, &EstimatorConfig::new(1.0, 500, 43), &|_, _| 1.0, &UniformSampling).unwrap();
    assert!(samples.iter().all(|s| s.xi > 0.0 && s.xi.is_finite()));
}

#[test]
fn unit_martingale_has_constant_mean() {
    let model = ConstantRateModel::new(1.0, OffspringLaw::fixed(2)).unwrap();
    let z = Population::from_scalars(0.0, &[0.0]);
    let times = [0.5, 1.0, 2.0];
    let est = martingale_estimates(&model, &UnitWeight, &z, &EstimatorConfig::new(2.0, 10_000, 44), &times).unwrap();
    for (t, e) in times.iter().zip(&est) {
        assert!(e.within_se(1.0, 3.0), "t = {t}: {e:?}");
    }
}

/// Unweighted mean size of the Yule model as the spine estimate of `f = 1/ψ`.
#[test]
fn yule_mean_size_through_inverse_weight() {
    let params = YuleParams::constant(1.0, 0.1, 0.0, (2.0, 2.0), (2.0, 1.0)).unwrap();
    let (model, weight) = (yule_model(params.clone()), yule_weight(params));
    let z = Population::from_scalars(0.0, &[1.0, 1.0, 1.0]);
    let cfg = EstimatorConfig::new(0.5, 20_000, 45);
    let w = weight.clone();
    let inv_psi = move |u: &Label, pop: &Population| 1.0 / w.psi(pop.trait_of(u).unwrap(), pop.marginal(), pop.time());
    let spine = many_to_one_estimate(&model, &weight, &z, &cfg, &inv_psi).unwrap();
    let direct = direct_estimate(&model, &UnitWeight, &z, &EstimatorConfig::new(0.5, 20_000, 46), &|_, _| 1.0).unwrap();
    assert!(spine.ci_overlaps(&direct), "spine {spine:?} direct {direct:?}");
}

#[test]
fn independent_exponential_samples_pass() {
    let mut rng = stream_rng(47, 0);
    let a: Vec<f64> = (0..10_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let b: Vec<f64> = (0..10_000).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let report = two_sample_check(&a, &b, SampleKind::Continuous, 0.01).unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn uniform_and_beta_samples_fail() {
    let mut rng = stream_rng(48, 0);
    let a: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
    // Median of three uniforms is Beta(2, 2).
    let b: Vec<f64> = (0..10_000)
        .map(|_| {
            let mut u = [rng.random::<f64>(), rng.random(), rng.random()];
            u.sort_by(f64::total_cmp);
            u[1]
        })
        .collect();
    let report = two_sample_check(&a, &b, SampleKind::Continuous, 0.01).unwrap();
    assert!(!report.pass && report.ks_p_value < 0.01, "{report:?}");
}
