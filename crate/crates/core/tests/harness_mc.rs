use jcir::harness::{
    martingale_pairs, run_lamn, run_lan, sample_limit_law, stable_clt_check, ExperimentConfig,
};
use jcir::inference::loglik_ratio_continuous;
use jcir::sim::{simulate_path, CirParams, Scheme};
use jcir::{rng, stats, LevyMeasure};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

fn gate(b: f64) -> CirParams {
    CirParams::new(
        2.0,
        b,
        0.5,
        2.5,
        LevyMeasure::CompoundPoissonExponential { intensity: 1.0, decay: 2.0 },
    )
}

#[test]
fn lan_variance_to_mean_ratio_approaches_one() {
    let ratio = |t: f64| {
        let cfg = ExperimentConfig {
            params: gate(1.0),
            horizon: t,
            path_step: 0.01,
            replications: 2000,
            seed: 21,
            ..Default::default()
        };
        let r = run_lan(&cfg).unwrap().report;
        r.extra["var_over_minus_two_mean"]
    };
    let (short, long) = (ratio(16.0), ratio(144.0));
    assert!((long - 1.0).abs() < (short - 1.0).abs(), "T = 16: {short}, T = 144: {long}");
}

#[test]
fn two_sample_ks_calibration() {
    let p = CirParams::new(2.0, 0.0, 0.5, 1.0, LevyMeasure::Zero);
    let passes = (0..50u64)
        .filter(|&i| {
            let x = sample_limit_law(&p, 1000, rng::derive_seed(22, "left", i)).unwrap().quadratic(1.0);
            let y = sample_limit_law(&p, 1000, rng::derive_seed(22, "right", i)).unwrap().quadratic(1.0);
            stats::ks_two_sample(&x, &y).p_value > 0.01
        })
        .count();
    assert!(passes >= 49, "{passes} of 50");
}

// Fifty runs of an exactly calibrated 1% test fail this with probability
// about 0.09, so the frequency is estimated from 1000 runs.
#[test]
fn one_sample_ks_calibration() {
    let passes = (0..1000u64)
        .filter(|&i| {
            let mut r = rng::stream(23, "normal", i);
            let xs: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut r)).collect();
            stats::ks_one_sample(&xs, |x| stats::normal_cdf(x, 0.0, 1.0)).p_value > 0.01
        })
        .count();
    assert!(passes >= 980, "{passes} of 1000");
}

#[test]
fn bracket_concentrates_in_the_subcritical_case() {
    let var = |t: f64| {
        let pairs = martingale_pairs(&gate(1.0), t, 0.01, 1.0 / t.sqrt(), 1000, 24).unwrap();
        stats::variance(&pairs.iter().map(|x| x.1).collect::<Vec<_>>())
    };
    let (v50, v200) = (var(50.0), var(200.0));
    assert!(v50 / v200 > 1.5, "{v50} / {v200}");
}

#[test]
fn studentized_martingale_is_standard_normal() {
    let sub = stable_clt_check(&gate(1.0), 50.0, 0.01, None, 10_000, 25).unwrap().report;
    assert!(sub.pass, "{:?}", sub.gates);
    let sup = stable_clt_check(&gate(-0.5), 30.0, 0.01, None, 10_000, 26).unwrap().report;
    assert!(sup.pass, "{:?}", sup.gates);
}

#[test]
fn lamn_needs_the_exponential_rate() {
    let p = gate(-0.5);
    let t = 30.0;
    let cfg = ExperimentConfig {
        params: p.clone(),
        horizon: t,
        path_step: 0.01,
        replications: 200,
        limit_replications: 2000,
        seed: 27,
        ..Default::default()
    };
    let out = run_lamn(&cfg).unwrap();
    let median_info = out.report.extra["median_info"];
    assert!(out.report.gate("spread_over_u2_median_info").unwrap().pass);
    let wrong: Vec<f64> = (0..200u64)
        .into_par_iter()
        .map(|i| {
            let path = simulate_path(&p, t, 3000, Scheme::ExactBetweenJumps, rng::derive_seed(27, "replication", i)).unwrap();
            loglik_ratio_continuous(&path, &p, p.b + 1.0 / t.sqrt())
        })
        .collect();
    let spread = stats::variance(&wrong) / median_info;
    assert!(!(0.1..=10.0).contains(&spread), "spread {spread}");
}
