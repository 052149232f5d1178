//! Drift estimation for `b` with `a`, `σ` and the Lévy measure known.
//!
//! Continuous observation uses the Girsanov density
//!
//! ```text
//! log dP^{b'}/dP^{b} = -((b'-b)/σ²) R - ((b'² - b²)/(2σ²)) S,
//! R = Y_T - y_0 - aT - J_T,   S = ∫_0^T Y ds,
//! ```
//!
//! whose maximizer is `b̂ = -R/S`. Discrete observation uses the product of
//! transition densities from [`crate::affine`].

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::affine::{frequency_bound, CharTable};
use crate::error::{invalid, Error, Result};
use crate::sim::{CirParams, SamplePath};
use crate::stats::pairwise_sum;

/// Default multiple `c` in the jump threshold `c sqrt(Δ) (1 + Y)`.
pub const DEFAULT_JUMP_THRESHOLD: f64 = 4.0;

/// `J_T`. Stored marks are summed when present. Otherwise every increment
/// above `c sqrt(Δ) (1 + Y_{t_k})` counts as a jump; that rule is an
/// approximation meant for imported data.
pub fn jump_sum(path: &SamplePath, threshold: Option<f64>) -> f64 {
    if let Some(marks) = &path.marks {
        return pairwise_sum(&marks.iter().map(|m| m.size).collect::<Vec<_>>());
    }
    let c = threshold.unwrap_or(DEFAULT_JUMP_THRESHOLD);
    let cut = c * path.dt.sqrt();
    let jumps: Vec<f64> = path
        .states
        .windows(2)
        .map(|w| w[1] - w[0])
        .zip(&path.states)
        .filter(|&(d, &y)| d > cut * (1.0 + y))
        .map(|(d, _)| d)
        .collect();
    pairwise_sum(&jumps)
}

/// True when [`jump_sum`] is exact for this path.
pub fn jumps_observed(path: &SamplePath) -> bool {
    path.marks.is_some()
}

/// `R = Y_T - y_0 - aT - J_T`.
pub fn drift_residual(path: &SamplePath, a: f64) -> f64 {
    path.y_end() - path.y0() - a * path.horizon() - jump_sum(path, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MleResult {
    pub b_hat: f64,
    pub iterations: usize,
    pub bracket: (f64, f64),
    /// Log-likelihood at `b_hat`; relative to `b = 0` for continuous data.
    pub objective: f64,
}

/// Continuous-observation MLE `-R/S`. `σ` only needs to be valid; the
/// estimator does not depend on it.
pub fn mle_continuous(path: &SamplePath, a: f64, sigma: f64) -> Result<MleResult> {
    if !(sigma > 0.0) {
        return Err(invalid(format!("sigma must be > 0, got {sigma}")));
    }
    let s = path.integral();
    if !(s > 0.0) {
        return Err(invalid("∫Y ds vanishes; the drift is not identifiable"));
    }
    let r = drift_residual(path, a);
    let b_hat = -r / s;
    Ok(MleResult {
        b_hat,
        iterations: 0,
        bracket: (b_hat, b_hat),
        objective: r * r / (2.0 * sigma * sigma * s),
    })
}

/// `log dP^{b̃}/dP^{b}` on the path, with `b = p.b`.
pub fn loglik_ratio_continuous(path: &SamplePath, p: &CirParams, b_tilde: f64) -> f64 {
    let s2 = p.sigma * p.sigma;
    let r = drift_residual(path, p.a);
    let s = path.integral();
    -((b_tilde - p.b) / s2) * r - ((b_tilde * b_tilde - p.b * p.b) / (2.0 * s2)) * s
}

/// Scaled score and information at `b_0` with rate `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreInfo {
    pub score: f64,
    pub info: f64,
    pub rate: f64,
}

impl ScoreInfo {
    /// `u U - u² I / 2`.
    pub fn quadratic(&self, u: f64) -> f64 {
        u * self.score - 0.5 * u * u * self.info
    }
}

/// `U = -(φ/σ²)(R + b_0 S)`, `I = (φ²/σ²) S` with `b_0 = p.b`, so that
/// `log dP^{b_0 + φu}/dP^{b_0} = uU - u²I/2` exactly.
pub fn score_info(path: &SamplePath, p: &CirParams, rate: f64) -> ScoreInfo {
    let s2 = p.sigma * p.sigma;
    let s = path.integral();
    ScoreInfo {
        score: -(rate / s2) * (drift_residual(path, p.a) + p.b * s),
        info: rate * rate / s2 * s,
        rate,
    }
}

/// Observations `Y_0, ..., Y_n` at `t_k = kΔ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteObs {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl DiscreteObs {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<DiscreteObs> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("observation step must be positive, got {dt}")));
        }
        if values.len() < 2 {
            return Err(invalid("need at least two observations"));
        }
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !(**v >= 0.0 && v.is_finite())) {
            return Err(invalid(format!("observation {k} is {v}")));
        }
        Ok(DiscreteObs { dt, values })
    }

    /// Every `stride`-th state of a simulated path.
    pub fn from_path(path: &SamplePath, stride: usize) -> Result<DiscreteObs> {
        let stride = stride.max(1);
        DiscreteObs::new(path.dt * stride as f64, path.subsample(stride))
    }

    pub fn len(&self) -> usize {
        self.values.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() < 2
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.len() as f64
    }

    fn table(&self, p: &CirParams, with_db: bool) -> Result<CharTable> {
        let n = self.len();
        let x_min = self.values[..n].iter().copied().fold(f64::INFINITY, f64::min);
        let x_max = self.values[..n].iter().copied().fold(0.0, f64::max);
        let y_max = self.values[1..].iter().copied().fold(0.0, f64::max);
        let omega = frequency_bound(p, self.dt, x_max, y_max);
        CharTable::build(p, self.dt, omega, x_min, with_db)
    }
}

fn log_transition(table: &CharTable, x: f64, y: f64, k: usize) -> Result<f64> {
    let d = table.density(x, y).map_err(|e| e.tag("inference", format!("transition {k}")))?;
    if d > 0.0 {
        Ok(d.ln())
    } else {
        Err(Error::Accuracy("zero density".into()).tag("inference", format!("transition {k}")))
    }
}

/// `Σ_k log p^b(Δ, Y_k, Y_{k+1})` with `b = p.b`.
pub fn loglik_discrete(obs: &DiscreteObs, p: &CirParams) -> Result<f64> {
    let table = obs.table(p, false)?;
    let terms: Result<Vec<f64>> = (0..obs.len())
        .into_par_iter()
        .map(|k| log_transition(&table, obs.values[k], obs.values[k + 1], k))
        .collect();
    Ok(pairwise_sum(&terms?))
}

/// Log-likelihood and its derivative in `b`.
pub fn loglik_discrete_with_score(obs: &DiscreteObs, p: &CirParams) -> Result<(f64, f64)> {
    let table = obs.table(p, true)?;
    let terms: Result<Vec<(f64, f64)>> = (0..obs.len())
        .into_par_iter()
        .map(|k| {
            let (d, db) = table
                .density_with_db(obs.values[k], obs.values[k + 1])
                .map_err(|e| e.tag("inference", format!("transition {k}")))?;
            if !(d > 0.0) {
                return Err(Error::Accuracy("zero density".into()).tag("inference", format!("transition {k}")));
            }
            Ok((d.ln(), db / d))
        })
        .collect();
    let terms = terms?;
    let ll: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let sc: Vec<f64> = terms.iter().map(|t| t.1).collect();
    Ok((pairwise_sum(&ll), pairwise_sum(&sc)))
}

/// Pilot estimate for discrete data: the continuous formula with `∫Y` by
/// left sums and `J_T` replaced by its mean `T ∫ z m(dz)`.
pub fn discrete_pilot(obs: &DiscreteObs, p: &CirParams) -> Result<f64> {
    let n = obs.len();
    let s = obs.dt * pairwise_sum(&obs.values[..n]);
    if !(s > 0.0) {
        return Err(invalid("observations sum to zero; the drift is not identifiable"));
    }
    let t = obs.horizon();
    let r = obs.values[n] - obs.values[0] - (p.a + p.jump_mean()) * t;
    Ok(-r / s)
}

/// Golden-section tolerance in `b`.
pub const MLE_TOL: f64 = 1e-6;
/// Width at which score-sign bracketing hands over to golden section.
const BRACKET_TOL: f64 = 1e-5;

/// Maximize the discrete log-likelihood over `b` in `interval` (default:
/// pilot ± 2). The score must be positive at the left end and negative at
/// the right end. The bracket is narrowed by Illinois steps on the score
/// sign and the maximizer is then located by golden section.
pub fn mle_discrete(obs: &DiscreteObs, p: &CirParams, interval: Option<(f64, f64)>) -> Result<MleResult> {
    let (lo, hi) = match interval {
        Some(i) => i,
        None => {
            let pilot = discrete_pilot(obs, p)?;
            (pilot - 2.0, pilot + 2.0)
        }
    };
    if !(lo < hi) {
        return Err(invalid(format!("empty search interval [{lo}, {hi}]")));
    }
    let score = |b: f64| loglik_discrete_with_score(obs, &p.with_b(b)).map(|r| r.1);
    let (mut a, mut fa) = (lo, score(lo)?);
    let (mut b, mut fb) = (hi, score(hi)?);
    if !(fa > 0.0 && fb < 0.0) {
        return Err(Error::NotBracketed(format!("score {fa:.4e} at b = {lo}, {fb:.4e} at b = {hi}")));
    }
    let mut iterations = 2;
    let mut side = 0;
    while b - a > BRACKET_TOL {
        let x = ((a * fb - b * fa) / (fb - fa)).clamp(a, b);
        let x = if x <= a || x >= b { 0.5 * (a + b) } else { x };
        let fx = score(x)?;
        iterations += 1;
        if fx > 0.0 {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
        // when the next estimate is within tolerance, probe just past it
        // to collapse the bracket from the far side
        let guess = (a * fb - b * fa) / (fb - fa);
        if (guess - x).abs() < 0.5 * BRACKET_TOL && b - a > BRACKET_TOL {
            let probe = x + (0.5 * BRACKET_TOL).copysign(guess - x);
            if probe > a && probe < b {
                let fp = score(probe)?;
                iterations += 1;
                if fp > 0.0 {
                    a = probe;
                    fa = fp;
                } else {
                    b = probe;
                    fb = fp;
                }
            }
        }
        if iterations > 200 {
            return Err(Error::Accuracy("score bracketing did not converge".into()));
        }
    }
    let f = |b: f64| loglik_discrete(obs, &p.with_b(b));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    iterations += 2;
    while b - a > MLE_TOL {
        iterations += 1;
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let (b_hat, objective) = if fc >= fd { (c, fc) } else { (d, fd) };
    Ok(MleResult {
        b_hat,
        iterations,
        bracket: (lo, hi),
        objective,
    })
}

/// `loglik(b_0 + φu) - loglik(b_0)` with `b_0 = p.b` and `φ = rate`.
pub fn loglik_ratio_discrete(obs: &DiscreteObs, p: &CirParams, u: f64, rate: f64) -> Result<f64> {
    if u == 0.0 {
        return Ok(0.0);
    }
    Ok(loglik_discrete(obs, &p.with_b(p.b + rate * u))? - loglik_discrete(obs, p)?)
}

/// One row of an estimator table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateRow {
    pub seed: u64,
    pub b_hat: f64,
    #[serde(rename = "U")]
    pub score: f64,
    #[serde(rename = "I")]
    pub info: f64,
    pub loglik: f64,
}

/// CSV with columns `seed,b_hat,U,I,loglik`.
pub fn write_estimates<W: Write>(rows: &[EstimateRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    if rows.is_empty() {
        out.write_record(["seed", "b_hat", "U", "I", "loglik"])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine::diffusion_density;
    use crate::levy::LevyMeasure;
    use crate::sim::{decay_integral, simulate_path, JumpMark, Scheme};

    fn cpe() -> LevyMeasure {
        LevyMeasure::CompoundPoissonExponential { intensity: 1.0, decay: 2.0 }
    }

    fn gate(b: f64) -> CirParams {
        CirParams::new(2.0, b, 0.5, 2.5, cpe())
    }

    fn ode_path(p: &CirParams, dt: f64, steps: usize) -> SamplePath {
        let y_inf = p.a / p.b;
        let states = (0..=steps)
            .map(|k| y_inf + (p.y0 - y_inf) * (-p.b * dt * k as f64).exp())
            .collect();
        SamplePath {
            dt,
            states,
            dw: vec![0.0; steps],
            dj: vec![0.0; steps],
            marks: Some(Vec::new()),
            scheme: Scheme::Imported,
            seed: None,
        }
    }

    #[test]
    fn zero_measure_has_no_jumps() {
        let p = CirParams::new(2.0, 1.0, 0.5, 1.0, LevyMeasure::Zero);
        let path = simulate_path(&p, 5.0, 500, Scheme::ExactBetweenJumps, 1).unwrap();
        assert_eq!(jump_sum(&path, None), 0.0);
    }

    #[test]
    fn injected_jump_is_counted() {
        let mut path = ode_path(&CirParams::new(1.0, 1.0, 0.5, 1.0, LevyMeasure::Zero), 0.01, 200);
        path.marks = Some(vec![JumpMark { time: 1.0, size: 3.0 }]);
        assert_eq!(jump_sum(&path, None), 3.0);
        // without marks the threshold rule finds it from the states
        for y in &mut path.states[101..] {
            *y += 3.0;
        }
        path.marks = None;
        assert!(!jumps_observed(&path));
        assert!((jump_sum(&path, None) - 3.0).abs() < 0.02);
    }

    #[test]
    fn dirac_jump_rate() {
        let rate = 1.5;
        let p = CirParams::new(1.0, 1.0, 0.5, 1.0, LevyMeasure::DiracAtom { rate, location: 1.0 });
        let t = 400.0;
        let path = simulate_path(&p, t, 4000, Scheme::ExactBetweenJumps, 9).unwrap();
        let se = (rate / t).sqrt();
        assert!((jump_sum(&path, None) / t - rate).abs() < 4.0 * se);
    }

    #[test]
    fn noise_free_path_recovers_b() {
        let p = CirParams::new(2.0, 0.7, 0.5, 0.3, LevyMeasure::Zero);
        for &dt in &[0.02, 0.01] {
            let path = ode_path(&p, dt, (10.0 / dt) as usize);
            let b_hat = mle_continuous(&path, p.a, p.sigma).unwrap().b_hat;
            // trapezoid error is O(dt²)
            assert!((b_hat - p.b).abs() < 0.05 * dt * dt + 1e-12, "dt {dt}: {b_hat}");
        }
    }

    #[test]
    fn jump_shift_cancels_in_residual() {
        let p = gate(1.0);
        let path = simulate_path(&p, 10.0, 1000, Scheme::ExactBetweenJumps, 4).unwrap();
        let mut shifted = path.clone();
        for y in &mut shifted.states[501..] {
            *y += 0.8;
        }
        shifted.marks.as_mut().unwrap().push(JumpMark { time: 5.0, size: 0.8 });
        let (r0, r1) = (drift_residual(&path, p.a), drift_residual(&shifted, p.a));
        assert!((r0 - r1).abs() < 1e-12);
        let b1 = mle_continuous(&shifted, p.a, p.sigma).unwrap().b_hat;
        assert!((b1 + r0 / shifted.integral()).abs() < 1e-12);
    }

    #[test]
    fn estimator_ignores_sigma() {
        let p = gate(1.0);
        let path = simulate_path(&p, 10.0, 1000, Scheme::ExactBetweenJumps, 5).unwrap();
        let b1 = mle_continuous(&path, p.a, 0.5).unwrap().b_hat;
        let b2 = mle_continuous(&path, p.a, 5.0).unwrap().b_hat;
        assert_eq!(b1, b2);
        assert!(mle_continuous(&ode_path(&CirParams::new(0.0, 1.0, 0.5, 0.0, LevyMeasure::Zero), 0.1, 10), 0.0, 0.5)
            .is_err());
    }

    #[test]
    fn continuous_ratio_identities() {
        let p = gate(1.0);
        let path = simulate_path(&p, 20.0, 2000, Scheme::ExactBetweenJumps, 6).unwrap();
        assert_eq!(loglik_ratio_continuous(&path, &p, 1.0), 0.0);
        let fwd = loglik_ratio_continuous(&path, &p, 1.3);
        let back = loglik_ratio_continuous(&path, &p.with_b(1.3), 1.0);
        assert!((fwd + back).abs() < 1e-12 * (1.0 + fwd.abs()));
        let rate = 1.0 / 20f64.sqrt();
        let si = score_info(&path, &p, rate);
        assert!(si.info > 0.0);
        for u in [-1.0, 0.5, 2.0] {
            let direct = loglik_ratio_continuous(&path, &p, p.b + rate * u);
            assert!((direct - si.quadratic(u)).abs() < 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn continuous_mle_maximizes_ratio() {
        let p = gate(1.0);
        let path = simulate_path(&p, 20.0, 2000, Scheme::ExactBetweenJumps, 7).unwrap();
        let m = mle_continuous(&path, p.a, p.sigma).unwrap();
        let at = |b: f64| loglik_ratio_continuous(&path, &p.with_b(0.0), b);
        assert!((at(m.b_hat) - m.objective).abs() < 1e-9 * m.objective.abs());
        assert!(at(m.b_hat) > at(m.b_hat + 0.01) && at(m.b_hat) > at(m.b_hat - 0.01));
    }

    #[test]
    fn girsanov_unit_mean_small() {
        let p = gate(1.0);
        let vals: Vec<f64> = (0..1000)
            .map(|s| {
                let path = simulate_path(&p, 5.0, 500, Scheme::ExactBetweenJumps, 100 + s).unwrap();
                loglik_ratio_continuous(&path, &p, 1.2).exp()
            })
            .collect();
        let m = crate::stats::mean(&vals);
        assert!((m - 1.0).abs() < 3.0 * crate::stats::std_error(&vals), "{m}");
    }

    #[test]
    fn two_point_loglik_matches_chi_square() {
        let p = CirParams::new(2.0, 0.8, 0.5, 2.0, LevyMeasure::Zero);
        let obs = DiscreteObs::new(0.1, vec![2.0, 2.2]).unwrap();
        let ll = loglik_discrete(&obs, &p).unwrap();
        let exact = diffusion_density(p.a, p.b, p.sigma, 0.1, 2.0, 2.2).ln();
        assert!((ll - exact).abs() < 1e-8, "{ll} vs {exact}");
    }

    #[test]
    fn loglik_is_additive_over_blocks() {
        let p = gate(1.0);
        let path = simulate_path(&p, 10.0, 200, Scheme::ExactBetweenJumps, 8).unwrap();
        let all = DiscreteObs::new(0.05, path.states.clone()).unwrap();
        let left = DiscreteObs::new(0.05, path.states[..=100].to_vec()).unwrap();
        let right = DiscreteObs::new(0.05, path.states[100..].to_vec()).unwrap();
        let total = loglik_discrete(&all, &p).unwrap();
        let parts = loglik_discrete(&left, &p).unwrap() + loglik_discrete(&right, &p).unwrap();
        assert!((total - parts).abs() < 1e-9 * total.abs());
    }

    #[test]
    fn discrete_score_matches_finite_difference() {
        let p = gate(1.0);
        let path = simulate_path(&p, 5.0, 100, Scheme::ExactBetweenJumps, 10).unwrap();
        let obs = DiscreteObs::new(0.05, path.states).unwrap();
        let (_, score) = loglik_discrete_with_score(&obs, &p).unwrap();
        let h = 1e-4;
        let fd = (loglik_discrete(&obs, &p.with_b(1.0 + h)).unwrap() - loglik_discrete(&obs, &p.with_b(1.0 - h)).unwrap())
            / (2.0 * h);
        assert!((score - fd).abs() < 1e-5 * (1.0 + fd.abs()), "{score} vs {fd}");
    }

    #[test]
    fn ratio_at_zero_and_telescoping() {
        let p = gate(1.0);
        let path = simulate_path(&p, 5.0, 100, Scheme::ExactBetweenJumps, 11).unwrap();
        let obs = DiscreteObs::new(0.05, path.states).unwrap();
        assert_eq!(loglik_ratio_discrete(&obs, &p, 0.0, 0.3).unwrap(), 0.0);
        let direct = loglik_ratio_discrete(&obs, &p, 1.0, 0.3).unwrap();
        let first = loglik_ratio_discrete(&obs, &p, 0.5, 0.3).unwrap();
        let second = loglik_ratio_discrete(&obs, &p.with_b(1.15), 0.5, 0.3).unwrap();
        assert!((direct - first - second).abs() < 1e-9);
    }

    /// Discrete MLE against the noncentral chi-square likelihood, maximized
    /// by golden section on the oracle directly.
    #[test]
    fn zero_measure_mle_matches_chi_square() {
        let p = CirParams::new(2.0, 1.0, 0.5, 2.0, LevyMeasure::Zero);
        let path = simulate_path(&p, 25.0, 500, Scheme::ExactBetweenJumps, 12).unwrap();
        let obs = DiscreteObs::new(0.05, path.states).unwrap();
        let fit = mle_discrete(&obs, &p, None).unwrap();
        let oracle = |b: f64| -> f64 {
            obs.values
                .windows(2)
                .map(|w| diffusion_density(p.a, b, p.sigma, obs.dt, w[0], w[1]).ln())
                .sum()
        };
        let (mut lo, mut hi) = (fit.b_hat - 0.5, fit.b_hat + 0.5);
        while hi - lo > 1e-8 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if oracle(m1) < oracle(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        assert!((fit.b_hat - lo).abs() < 1e-4, "{} vs {lo}", fit.b_hat);
        let f = |b: f64| loglik_discrete(&obs, &p.with_b(b)).unwrap();
        assert!(fit.objective >= f(fit.b_hat + 0.01) && fit.objective >= f(fit.b_hat - 0.01));
        assert!(fit.iterations > 0);
        assert!(decay_integral(fit.b_hat, obs.dt) > 0.0);
    }

    #[test]
    fn unbracketed_interval_is_rejected() {
        let p = gate(1.0);
        let path = simulate_path(&p, 5.0, 100, Scheme::ExactBetweenJumps, 13).unwrap();
        let obs = DiscreteObs::new(0.05, path.states).unwrap();
        // an interval far to the right of the maximizer has negative score at both ends
        let e = mle_discrete(&obs, &p, Some((20.0, 30.0))).unwrap_err();
        assert!(matches!(e, Error::NotBracketed(_)));
    }

    #[test]
    fn estimates_csv_header() {
        let rows = [EstimateRow { seed: 3, b_hat: 1.0, score: 0.5, info: 10.0, loglik: -2.0 }];
        let mut buf = Vec::new();
        write_estimates(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("seed,b_hat,U,I,loglik\n3,1.0,0.5,10.0,-2.0"));
    }

    #[test]
    fn observation_validation() {
        assert!(DiscreteObs::new(0.1, vec![1.0]).is_err());
        assert!(DiscreteObs::new(0.0, vec![1.0, 2.0]).is_err());
        assert!(DiscreteObs::new(0.1, vec![1.0, -2.0]).is_err());
    }
}
