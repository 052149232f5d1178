//! Model parameters and path simulation of
//! `dY = (a - bY) dt + σ sqrt(Y) dW + dJ`.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::levy::{JumpSampler, LevyMeasure, StepJumps};
use crate::rng;

/// `a/σ²` must exceed this for the discrete-observation results.
pub fn discrete_ratio_bound() -> f64 {
    (15.0 + 185f64.sqrt()) / 4.0
}

/// `(1 - e^{-bt})/b`, equal to `t` at `b = 0` and accurate near it.
pub fn decay_integral(b: f64, t: f64) -> f64 {
    if b == 0.0 {
        t
    } else {
        -(-b * t).exp_m1() / b
    }
}

fn default_levy() -> LevyMeasure {
    LevyMeasure::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirParams {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub y0: f64,
    #[serde(default = "default_levy")]
    pub levy: LevyMeasure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

impl CirParams {
    pub fn new(a: f64, b: f64, sigma: f64, y0: f64, levy: LevyMeasure) -> Self {
        CirParams { a, b, sigma, y0, levy }
    }

    pub fn with_b(&self, b: f64) -> Self {
        CirParams { b, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.a.is_finite()) {
            return Err(invalid(format!("a must be >= 0, got {}", self.a)));
        }
        if !self.b.is_finite() {
            return Err(invalid(format!("b must be finite, got {}", self.b)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.y0 >= 0.0 && self.y0.is_finite()) {
            return Err(invalid(format!("y0 must be >= 0, got {}", self.y0)));
        }
        self.levy.validate()
    }

    pub fn classify(&self) -> Criticality {
        if self.b > 0.0 {
            Criticality::Subcritical
        } else if self.b == 0.0 {
            Criticality::Critical
        } else {
            Criticality::Supercritical
        }
    }

    /// `∫ z m(dz)`.
    pub fn jump_mean(&self) -> f64 {
        self.levy.first_moment().unwrap_or(f64::NAN)
    }

    /// `a/σ²`.
    pub fn feller_ratio(&self) -> f64 {
        self.a / (self.sigma * self.sigma)
    }

    pub fn meets_discrete_condition(&self) -> bool {
        self.feller_ratio() > discrete_ratio_bound()
    }

    pub fn check_discrete_condition(&self) -> Result<()> {
        if self.meets_discrete_condition() {
            Ok(())
        } else {
            Err(Error::DiscreteCondition {
                ratio: self.feller_ratio(),
                bound: discrete_ratio_bound(),
            })
        }
    }

    /// `E[Y_t]`.
    pub fn mean_at(&self, t: f64) -> f64 {
        self.y0 * (-self.b * t).exp() + (self.a + self.jump_mean()) * decay_integral(self.b, t)
    }

    /// `Var[Y_t]`.
    pub fn variance_at(&self, t: f64) -> f64 {
        let g = decay_integral(self.b, t);
        let e = (-self.b * t).exp();
        let s2 = self.sigma * self.sigma;
        let m2 = self.levy.moment(2.0).unwrap_or(f64::NAN);
        s2 * self.y0 * e * g + 0.5 * s2 * (self.a + self.jump_mean()) * g * g + 0.5 * m2 * g * (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Exact diffusion-CIR transitions between jumps. Finite-activity jumps
    /// are placed at their sampled times inside the step, other increments
    /// at the step end.
    #[default]
    ExactBetweenJumps,
    /// `Y' = |Y + (a - bY)Δ + σ sqrt(Y) ΔW + ΔJ|`.
    SymmetrizedEuler,
    /// Imported data of unknown provenance.
    Imported,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpMark {
    pub time: f64,
    pub size: f64,
}

/// Trajectory on a uniform grid with its driving noise.
///
/// `dw[k]` and `dj[k]` are the Brownian and jump increments over
/// `(t_k, t_{k+1}]`. For the exact scheme the Brownian increment is the one
/// implied by the Euler relation, `(ΔY - (a - bY_k)Δ - ΔJ)/(σ sqrt(Y_k))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub dt: f64,
    pub states: Vec<f64>,
    pub dw: Vec<f64>,
    pub dj: Vec<f64>,
    pub marks: Option<Vec<JumpMark>>,
    pub scheme: Scheme,
    pub seed: Option<u64>,
}

impl SamplePath {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.steps() as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.dt * k as f64
    }

    pub fn y0(&self) -> f64 {
        self.states[0]
    }

    pub fn y_end(&self) -> f64 {
        *self.states.last().expect("path has at least one state")
    }

    /// Left-Riemann approximation of `(1/T) ∫ Y ds`.
    pub fn time_average(&self) -> f64 {
        let n = self.steps();
        if n == 0 {
            return self.states[0];
        }
        crate::stats::pairwise_sum(&self.states[..n]) / n as f64
    }

    /// Trapezoid approximation of `∫_0^T Y ds`.
    pub fn integral(&self) -> f64 {
        let n = self.steps();
        let inner = crate::stats::pairwise_sum(&self.states[1..n]);
        self.dt * (inner + 0.5 * (self.states[0] + self.states[n]))
    }

    /// Every `stride`-th state, as a coarser observation.
    pub fn subsample(&self, stride: usize) -> Vec<f64> {
        self.states.iter().step_by(stride.max(1)).copied().collect()
    }

    /// Write as CSV with columns `t,Y,dW,dJ`. Row `k` holds the increments
    /// over `(t_{k-1}, t_k]`, zero on the first row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "Y", "dW", "dJ"])?;
        for (k, y) in self.states.iter().enumerate() {
            let (dw, dj) = if k == 0 { (0.0, 0.0) } else { (self.dw[k - 1], self.dj[k - 1]) };
            out.write_record(&[
                format!("{}", self.time(k)),
                format!("{y}"),
                format!("{dw}"),
                format!("{dj}"),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Read a CSV written by [`SamplePath::write_csv`]. Columns `dW` and `dJ`
    /// are optional; without `dJ` the path carries no jump marks. With `dJ`
    /// each nonzero increment becomes a mark at the end of its step.
    pub fn read_csv<R: Read>(r: R) -> Result<SamplePath> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.trim() == name);
        let t_col = col("t").ok_or_else(|| Error::Config("path csv lacks a 't' column".into()))?;
        let y_col = col("Y").ok_or_else(|| Error::Config("path csv lacks a 'Y' column".into()))?;
        let (dw_col, dj_col) = (col("dW"), col("dJ"));
        let mut t = Vec::new();
        let mut states = Vec::new();
        let mut dw = Vec::new();
        let mut dj = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                rec.get(c)
                    .and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("path csv row {}: bad number in column {c}", line + 2)))
            };
            t.push(num(t_col)?);
            let y = num(y_col)?;
            if !(y >= 0.0) {
                return Err(Error::Config(format!("path csv row {}: negative state {y}", line + 2)));
            }
            states.push(y);
            if line > 0 {
                dw.push(dw_col.map(num).transpose()?.unwrap_or(0.0));
                dj.push(dj_col.map(num).transpose()?.unwrap_or(0.0));
            }
        }
        if states.len() < 2 {
            return Err(Error::Config("path csv needs at least two rows".into()));
        }
        let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
        for k in 1..t.len() {
            if ((t[k] - t[k - 1]) - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::Config(format!("path csv row {}: grid is not uniform", k + 2)));
            }
        }
        let marks = dj_col.map(|_| {
            dj.iter()
                .enumerate()
                .filter(|(_, &s)| s > 0.0)
                .map(|(k, &s)| JumpMark {
                    time: t[k + 1] - t[0],
                    size: s,
                })
                .collect()
        });
        Ok(SamplePath {
            dt,
            states,
            dw,
            dj,
            marks,
            scheme: Scheme::Imported,
            seed: None,
        })
    }
}

/// Exact draw of the diffusion-CIR state after time `h` from `y`:
/// `c χ²_{d}(λ)` with `c = σ²(1-e^{-bh})/(4b)`, `d = 4a/σ²`, `λ = y e^{-bh}/c`,
/// sampled as a Poisson mixture of central chi-squares.
pub fn cir_transition<R: Rng + ?Sized>(y: f64, a: f64, b: f64, sigma: f64, h: f64, rng: &mut R) -> f64 {
    if h <= 0.0 {
        return y;
    }
    let c = 0.25 * sigma * sigma * decay_integral(b, h);
    let half_df = 2.0 * a / (sigma * sigma);
    let half_nc = 0.5 * y * (-b * h).exp() / c;
    let n = if half_nc > 0.0 {
        Poisson::new(half_nc).map(|p| p.sample(rng)).unwrap_or(half_nc)
    } else {
        0.0
    };
    let shape = half_df + n;
    if shape <= 0.0 {
        return 0.0;
    }
    2.0 * c * Gamma::new(shape, 1.0).expect("positive gamma shape").sample(rng)
}

fn check_grid(horizon: f64, steps: usize) -> Result<f64> {
    if steps == 0 {
        return Err(invalid("steps must be at least 1"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    Ok(horizon / steps as f64)
}

/// Simulate a path from `seed`. Brownian and jump randomness come from
/// separate derived streams, so two measures simulated with the same seed
/// share their Brownian increments under the Euler scheme.
pub fn simulate_path(p: &CirParams, horizon: f64, steps: usize, scheme: Scheme, seed: u64) -> Result<SamplePath> {
    let mut noise = rng::stream(seed, "brownian", 0);
    let mut jumps = rng::stream(seed, "jumps", 0);
    let mut path = simulate_path_with(p, horizon, steps, scheme, None, &mut noise, &mut jumps)?;
    path.seed = Some(seed);
    Ok(path)
}

/// Simulate a path with caller-owned streams. `threshold` sets the jump
/// split level for measures simulated by splitting.
pub fn simulate_path_with<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    p: &CirParams,
    horizon: f64,
    steps: usize,
    scheme: Scheme,
    threshold: Option<f64>,
    noise: &mut R1,
    jumps: &mut R2,
) -> Result<SamplePath> {
    p.validate()?;
    let dt = check_grid(horizon, steps)?;
    let sampler = p.levy.sampler(dt, threshold)?;
    match scheme {
        Scheme::ExactBetweenJumps => Ok(exact_path(p, dt, steps, &sampler, noise, jumps)),
        Scheme::SymmetrizedEuler => {
            let normal = Normal::new(0.0, dt.sqrt()).expect("positive step");
            let dw: Vec<f64> = (0..steps).map(|_| normal.sample(noise)).collect();
            let js: Vec<StepJumps> = (0..steps).map(|_| sampler.step(jumps)).collect();
            euler_path_from_noise(p, dt, &dw, &js)
        }
        Scheme::Imported => Err(invalid("cannot simulate with the imported scheme tag")),
    }
}

fn exact_path<R1: Rng + ?Sized, R2: Rng + ?Sized>(
    p: &CirParams,
    dt: f64,
    steps: usize,
    sampler: &JumpSampler,
    noise: &mut R1,
    jumps: &mut R2,
) -> SamplePath {
    let mut states = Vec::with_capacity(steps + 1);
    let mut dw = Vec::with_capacity(steps);
    let mut dj = Vec::with_capacity(steps);
    let mut marks = Vec::new();
    let mut y = p.y0;
    states.push(y);
    let root_sigma = p.sigma;
    for k in 0..steps {
        let t0 = dt * k as f64;
        let step = sampler.step(jumps);
        let start = y;
        let mut clock = 0.0;
        let mut jump_total = 0.0;
        for &(offset, size) in &step.marks {
            y = cir_transition(y, p.a, p.b, p.sigma, offset - clock, noise) + size;
            clock = offset;
            jump_total += size;
            marks.push(JumpMark { time: t0 + offset, size });
        }
        y = cir_transition(y, p.a, p.b, p.sigma, dt - clock, noise);
        if step.terminal > 0.0 {
            y += step.terminal;
            jump_total += step.terminal;
            marks.push(JumpMark {
                time: t0 + dt,
                size: step.terminal,
            });
        }
        let implied = if start > 0.0 {
            (y - start - (p.a - p.b * start) * dt - jump_total) / (root_sigma * start.sqrt())
        } else {
            0.0
        };
        states.push(y);
        dw.push(implied);
        dj.push(jump_total);
    }
    SamplePath {
        dt,
        states,
        dw,
        dj,
        marks: Some(marks),
        scheme: Scheme::ExactBetweenJumps,
        seed: None,
    }
}

/// Symmetrized Euler path driven by given Brownian increments and jumps.
/// Jumps inside a step are applied at its end.
pub fn euler_path_from_noise(p: &CirParams, dt: f64, dw: &[f64], jumps: &[StepJumps]) -> Result<SamplePath> {
    if !jumps.is_empty() && jumps.len() != dw.len() {
        return Err(invalid("jump and Brownian sequences differ in length"));
    }
    let steps = dw.len();
    let mut states = Vec::with_capacity(steps + 1);
    let mut dj = Vec::with_capacity(steps);
    let mut marks = Vec::new();
    let mut y = p.y0;
    states.push(y);
    for (k, &w) in dw.iter().enumerate() {
        let t0 = dt * k as f64;
        let jump = jumps.get(k).map_or(0.0, |j| {
            for &(offset, size) in &j.marks {
                marks.push(JumpMark { time: t0 + offset, size });
            }
            if j.terminal > 0.0 {
                marks.push(JumpMark {
                    time: t0 + dt,
                    size: j.terminal,
                });
            }
            j.total()
        });
        y = (y + (p.a - p.b * y) * dt + p.sigma * y.sqrt() * w + jump).abs();
        states.push(y);
        dj.push(jump);
    }
    Ok(SamplePath {
        dt,
        states,
        dw: dw.to_vec(),
        dj,
        marks: Some(marks),
        scheme: Scheme::SymmetrizedEuler,
        seed: None,
    })
}

/// Flow derivatives `∂_x X` and `∂_b X` on the fine steps of one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDerivatives {
    /// Times relative to the interval start.
    pub times: Vec<f64>,
    pub dx: Vec<f64>,
    pub db: Vec<f64>,
}

/// Flow derivatives over interval `k` of a path whose grid refines the
/// interval into `substeps` steps. Uses the exponential representation of
/// `∂_x X` and `∂_b X_t = -∫ X_r ∂_x X_t / ∂_x X_r dr` with left-point sums
/// and the stored Brownian increments.
pub fn flow_derivatives(path: &SamplePath, p: &CirParams, k: usize, substeps: usize) -> Result<FlowDerivatives> {
    let substeps = substeps.max(1);
    let start = k * substeps;
    let end = start + substeps;
    if end > path.steps() {
        return Err(invalid(format!("interval {k} lies beyond the path")));
    }
    let h = path.dt;
    let s = p.sigma;
    let mut times = Vec::with_capacity(substeps + 1);
    let mut dx = Vec::with_capacity(substeps + 1);
    let mut db = Vec::with_capacity(substeps + 1);
    let mut log_dx: f64 = 0.0;
    // running ∫ X_r / ∂_x X_r dr
    let mut weighted = 0.0;
    for j in start..=end {
        let cur = log_dx.exp();
        times.push(h * (j - start) as f64);
        dx.push(cur);
        db.push(-cur * weighted);
        if j == end {
            break;
        }
        let x = path.states[j];
        if !(x > 0.0) {
            return Err(Error::FlowUndefined { step: j, state: x });
        }
        weighted += x * h / cur;
        log_dx += -p.b * h - s * s * h / (8.0 * x) + 0.5 * s * path.dw[j] / x.sqrt();
    }
    Ok(FlowDerivatives { times, dx, db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    fn base(b: f64) -> CirParams {
        CirParams::new(
            2.0,
            b,
            0.5,
            2.5,
            LevyMeasure::CompoundPoissonExponential { intensity: 1.0, decay: 2.0 },
        )
    }

    #[test]
    fn classify_by_sign() {
        assert_eq!(base(1.0).classify(), Criticality::Subcritical);
        assert_eq!(base(0.0).classify(), Criticality::Critical);
        assert_eq!(base(-0.5).classify(), Criticality::Supercritical);
    }

    #[test]
    fn mean_examples() {
        let p = CirParams::new(1.0, 1.0, 0.3, 2.0, LevyMeasure::DiracAtom { rate: 0.5, location: 1.0 });
        assert!((p.mean_at(1e3) - 1.5).abs() < 1e-12);
        assert_eq!(p.mean_at(0.0), 2.0);
        let q = p.with_b(0.0);
        assert!((q.mean_at(4.0) - 8.0).abs() < 1e-12);
        // continuity across b = 0
        assert!((p.with_b(1e-12).mean_at(4.0) - 8.0).abs() < 1e-9);
        assert!((p.with_b(-1e-12).mean_at(4.0) - 8.0).abs() < 1e-9);
    }

    #[test]
    fn discrete_bound_value() {
        assert!((discrete_ratio_bound() - 7.150368).abs() < 1e-6);
        assert!(base(1.0).meets_discrete_condition());
        assert!(CirParams::new(1.0, 1.0, 1.0, 1.0, LevyMeasure::Zero).check_discrete_condition().is_err());
    }

    #[test]
    fn degenerate_sde_stays_at_zero() {
        let p = CirParams::new(0.0, 0.7, 0.5, 0.0, LevyMeasure::Zero);
        for scheme in [Scheme::ExactBetweenJumps, Scheme::SymmetrizedEuler] {
            for b in [-1.0, 0.0, 2.0] {
                let path = simulate_path(&p.with_b(b), 3.0, 50, scheme, 9).unwrap();
                assert!(path.states.iter().all(|&y| y == 0.0));
            }
        }
    }

    #[test]
    fn grid_errors() {
        let p = base(1.0);
        assert!(simulate_path(&p, 1.0, 0, Scheme::ExactBetweenJumps, 1).is_err());
        assert!(simulate_path(&p, 0.0, 10, Scheme::ExactBetweenJumps, 1).is_err());
    }

    #[test]
    fn monte_carlo_mean_and_variance_match_closed_forms() {
        for b in [-0.5, 0.0, 1.0] {
            for t in [1.0, 5.0] {
                let p = base(b);
                let ys: Vec<f64> = (0..10_000)
                    .map(|i| {
                        simulate_path(&p, t, 20, Scheme::ExactBetweenJumps, 1000 + i)
                            .unwrap()
                            .y_end()
                    })
                    .collect();
                let se = stats::std_error(&ys);
                let m = stats::mean(&ys);
                assert!((m - p.mean_at(t)).abs() < 4.0 * se, "b={b} t={t}: {m} vs {} (se {se})", p.mean_at(t));
                let v = stats::variance(&ys);
                let sd_v = v * (2.0 / 9999.0f64).sqrt() * 2.0;
                assert!((v - p.variance_at(t)).abs() < 4.0 * sd_v, "b={b} t={t}: var {v} vs {}", p.variance_at(t));
            }
        }
    }

    #[test]
    fn jump_bookkeeping() {
        let p = base(1.0);
        let path = simulate_path(&p, 10.0, 1000, Scheme::ExactBetweenJumps, 4).unwrap();
        let marks = path.marks.as_ref().unwrap();
        let total: f64 = marks.iter().map(|m| m.size).sum();
        let dj: f64 = path.dj.iter().sum();
        assert!((total - dj).abs() < 1e-12);
        assert!(marks.iter().all(|m| m.size > 0.0 && m.time <= 10.0));
    }

    #[test]
    fn implied_brownian_reconstructs_path() {
        let p = base(1.0);
        let path = simulate_path(&p, 2.0, 200, Scheme::ExactBetweenJumps, 8).unwrap();
        for k in 0..path.steps() {
            let y = path.states[k];
            let rebuilt = y + (p.a - p.b * y) * path.dt + p.sigma * y.sqrt() * path.dw[k] + path.dj[k];
            assert!((rebuilt - path.states[k + 1]).abs() < 1e-10 * (1.0 + y));
        }
    }

    #[test]
    fn brownian_sum_matches_time_scale() {
        // implied increments of the exact scheme have variance close to dt
        let p = CirParams::new(2.0, 1.0, 0.5, 2.5, LevyMeasure::Zero);
        let path = simulate_path(&p, 200.0, 20_000, Scheme::ExactBetweenJumps, 3).unwrap();
        let qv: f64 = path.dw.iter().map(|w| w * w).sum();
        assert!((qv / 200.0 - 1.0).abs() < 0.05, "{qv}");
    }

    #[test]
    fn time_average_examples() {
        let zero = SamplePath {
            dt: 0.1,
            states: vec![0.0; 5],
            dw: vec![0.0; 4],
            dj: vec![0.0; 4],
            marks: None,
            scheme: Scheme::Imported,
            seed: None,
        };
        assert_eq!(zero.time_average(), 0.0);
        let two = SamplePath {
            dt: 0.5,
            states: vec![1.0, 3.0],
            dw: vec![0.0],
            dj: vec![0.0],
            ..zero.clone()
        };
        assert_eq!(two.time_average(), 1.0);
        assert_eq!(two.integral(), 1.0);
        let p = base(1.0);
        let long = simulate_path(&p, 500.0, 50_000, Scheme::ExactBetweenJumps, 12).unwrap();
        let target = (p.a + p.jump_mean()) / p.b;
        assert!((long.time_average() / target - 1.0).abs() < 0.05);
    }

    #[test]
    fn flow_derivatives_initial_values_and_signs() {
        let p = base(1.0);
        let path = simulate_path(&p, 1.0, 64, Scheme::SymmetrizedEuler, 2).unwrap();
        let f = flow_derivatives(&path, &p, 1, 16).unwrap();
        assert_eq!(f.dx[0], 1.0);
        assert_eq!(f.db[0], 0.0);
        assert!(f.dx.iter().all(|&v| v > 0.0));
        assert!(f.db[1..].iter().all(|&v| v < 0.0));
        assert!(flow_derivatives(&path, &p, 4, 16).is_err());
    }

    #[test]
    fn flow_derivative_frozen_noise() {
        let p = CirParams::new(2.0, 0.0, 0.5, 1.0, LevyMeasure::Zero);
        let dw = vec![0.0; 16];
        let path = euler_path_from_noise(&p, 0.01, &dw, &[]).unwrap();
        let f = flow_derivatives(&path, &p, 0, 16).unwrap();
        let integral: f64 = path.states[..16].iter().map(|x| 0.01 / x).sum();
        let expected = (-p.sigma * p.sigma / 8.0 * integral).exp();
        assert!((f.dx[16] - expected).abs() < 1e-15);
        assert!(f.dx[16] < 1.0);
    }

    #[test]
    fn flow_derivative_matches_finite_difference() {
        let p = CirParams::new(2.0, 1.0, 0.5, 1.5, LevyMeasure::Zero);
        let n = 400;
        let dt = 0.5 / n as f64;
        let normal = Normal::new(0.0, dt.sqrt()).unwrap();
        let mut r = rng::stream(5, "fd", 0);
        let dw: Vec<f64> = (0..n).map(|_| normal.sample(&mut r)).collect();
        let h = 1e-4;
        let up = euler_path_from_noise(&CirParams { y0: p.y0 + h, ..p.clone() }, dt, &dw, &[]).unwrap();
        let dn = euler_path_from_noise(&CirParams { y0: p.y0 - h, ..p.clone() }, dt, &dw, &[]).unwrap();
        let fd = (up.y_end() - dn.y_end()) / (2.0 * h);
        let path = euler_path_from_noise(&p, dt, &dw, &[]).unwrap();
        let f = flow_derivatives(&path, &p, 0, n).unwrap();
        assert!((f.dx[n] - fd).abs() < 0.02 * fd, "{} vs {fd}", f.dx[n]);
        let bu = euler_path_from_noise(&p.with_b(p.b + h), dt, &dw, &[]).unwrap();
        let bd = euler_path_from_noise(&p.with_b(p.b - h), dt, &dw, &[]).unwrap();
        let fdb = (bu.y_end() - bd.y_end()) / (2.0 * h);
        assert!((f.db[n] - fdb).abs() < 0.02 * fdb.abs(), "{} vs {fdb}", f.db[n]);
    }

    #[test]
    fn comparison_with_dirac_jumps() {
        let zero = CirParams::new(2.0, 1.0, 0.5, 1.0, LevyMeasure::Zero);
        let jumpy = CirParams {
            levy: LevyMeasure::DiracAtom { rate: 2.0, location: 0.5 },
            ..zero.clone()
        };
        for seed in 0..200 {
            let a = simulate_path(&zero, 5.0, 500, Scheme::SymmetrizedEuler, seed).unwrap();
            let b = simulate_path(&jumpy, 5.0, 500, Scheme::SymmetrizedEuler, seed).unwrap();
            assert_eq!(a.dw, b.dw);
            assert!(a.states.iter().zip(&b.states).all(|(x, y)| y >= x));
        }
    }

    #[test]
    fn csv_roundtrip() {
        let p = base(1.0);
        let path = simulate_path(&p, 1.0, 10, Scheme::ExactBetweenJumps, 1).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 12);
        let back = SamplePath::read_csv(&buf[..]).unwrap();
        assert_eq!(back.states, path.states);
        assert_eq!(back.dj, path.dj);
        assert!((back.dt - path.dt).abs() < 1e-15);
        let bare = SamplePath::read_csv("t,Y\n0,1\n0.5,2\n".as_bytes()).unwrap();
        assert!(bare.marks.is_none());
        assert!(SamplePath::read_csv("t,Y\n0,1\n0.5,-2\n".as_bytes()).is_err());
    }
}
