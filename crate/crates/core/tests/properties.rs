use jcir::affine::{char_fn, psi};
use jcir::config::{emit_config, parse_config};
use jcir::inference::{loglik_ratio_continuous, mle_continuous, score_info};
use jcir::sim::{simulate_path, CirParams, Scheme};
use jcir::LevyMeasure;
use num_complex::Complex64;
use proptest::prelude::*;

fn levy() -> impl Strategy<Value = LevyMeasure> {
    prop_oneof![
        Just(LevyMeasure::Zero),
        (0.1..3.0f64, 0.5..4.0f64).prop_map(|(intensity, decay)| LevyMeasure::CompoundPoissonExponential { intensity, decay }),
        (0.1..3.0f64, 0.1..2.0f64).prop_map(|(rate, location)| LevyMeasure::DiracAtom { rate, location }),
        (0.1..2.0f64, 0.5..4.0f64).prop_map(|(intensity, decay)| LevyMeasure::GammaProcess { intensity, decay }),
    ]
}

fn params() -> impl Strategy<Value = CirParams> {
    (0.0..4.0f64, -1.0..2.0f64, 0.1..2.0f64, 0.0..5.0f64, levy())
        .prop_map(|(a, b, sigma, y0, levy)| CirParams::new(a, b, sigma, y0, levy))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn paths_stay_nonnegative(p in params(), seed in any::<u64>(), euler in any::<bool>()) {
        let scheme = if euler { Scheme::SymmetrizedEuler } else { Scheme::ExactBetweenJumps };
        let path = simulate_path(&p, 2.0, 200, scheme, seed).unwrap();
        prop_assert!(path.states.iter().all(|y| *y >= 0.0 && y.is_finite()));
        prop_assert_eq!(path.states.len(), 201);
    }

    #[test]
    fn same_seed_same_path(p in params(), seed in any::<u64>()) {
        let a = simulate_path(&p, 1.0, 50, Scheme::ExactBetweenJumps, seed).unwrap();
        let b = simulate_path(&p, 1.0, 50, Scheme::ExactBetweenJumps, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn psi_flow(b in -1.0..2.0f64, sigma in 0.1..2.0f64, t in 0.01..3.0f64, s in 0.01..3.0f64,
                re in -3.0..0.0f64, im in -30.0..30.0f64) {
        let p = CirParams::new(1.0, b, sigma, 1.0, LevyMeasure::Zero);
        let u = Complex64::new(re, im);
        let lhs = psi(&p, t + s, u).unwrap();
        let rhs = psi(&p, t, psi(&p, s, u).unwrap()).unwrap();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn characteristic_function_bounds(p in params(), t in 0.01..5.0f64, x in 0.0..5.0f64, v in -50.0..50.0f64) {
        prop_assert!((char_fn(&p, t, x, Complex64::new(0.0, 0.0)).unwrap() - 1.0).norm() < 1e-14);
        prop_assert!(char_fn(&p, t, x, Complex64::new(0.0, v)).unwrap().norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn loglik_ratio_is_quadratic_in_u(p in params(), seed in any::<u64>(), rate in 0.01..2.0f64, u in -3.0..3.0f64) {
        let path = simulate_path(&p, 5.0, 500, Scheme::ExactBetweenJumps, seed).unwrap();
        let lr = loglik_ratio_continuous(&path, &p, p.b + rate * u);
        let q = score_info(&path, &p, rate).quadratic(u);
        prop_assert!((lr - q).abs() <= 1e-12 * (1.0 + lr.abs()));
    }

    #[test]
    fn mle_maximizes_the_continuous_likelihood(p in params(), seed in any::<u64>(), step in -0.5..0.5f64) {
        let path = simulate_path(&p, 5.0, 500, Scheme::ExactBetweenJumps, seed).unwrap();
        prop_assume!(path.integral() > 1e-6);
        let b_hat = mle_continuous(&path, p.a, p.sigma).unwrap().b_hat;
        let at = |b: f64| loglik_ratio_continuous(&path, &p, b);
        prop_assert!(at(b_hat) >= at(b_hat + step) - 1e-9 * (1.0 + at(b_hat).abs()));
    }

    #[test]
    fn config_round_trip(p in params(), seed in 0..i64::MAX as u64, threads in proptest::option::of(1usize..16),
                         u in -5.0..5.0f64, reps in 2usize..5000) {
        let mut cfg = parse_config("command = \"experiment\"").unwrap();
        cfg.params = p;
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.experiment.u = u;
        cfg.experiment.replications = reps;
        let text = emit_config(&cfg).unwrap();
        let back = jcir::config::parse_unchecked(&text).unwrap();
        prop_assert_eq!(back, cfg);
    }
}
