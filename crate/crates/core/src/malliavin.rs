//! Skorohod weight for `∂_b log p` on one observation interval.
//!
//! An auxiliary Euler path `X` starts at `x` and runs for `Δ` in `n` fine
//! steps `h = Δ/n`. With `P = ∂_x X` and `A = ∂_b X_Δ / ∂_x X_Δ`, the
//! discrete weight
//!
//! ```text
//! δ = Σ_j A G̃_j dB_j - h Σ_j ∂(A G̃_j)/∂dB_j,   G̃_j = P_{j+1} / (σ sqrt(X_j))
//! ```
//!
//! satisfies `E[f(X_Δ) δ] = Δ ∂_b E[f(X_Δ)]` exactly for the Euler chain,
//! by Gaussian integration by parts in each `dB_j`. It is split as
//!
//! ```text
//! δ = main + H1 + H2 + H3 - H4 - H5 - H6,
//! main - H4 - H5 - H6 = -(Δ/σ) sqrt(x) ΔB,
//! ```
//!
//! with `H = H1 + H2 + H3` of mean zero. `H1` and `H2` use the adapted
//! left-point integral `I = Σ P_j dB_j/(σ sqrt(X_j))`, so they vanish with
//! the noise; `H3` carries the anticipating correction.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::affine::{char_fn, phi_db, psi, psi_db};
use crate::error::{invalid, Error, Result};
use crate::levy::JumpSampler;
use crate::rng;
use crate::sim::CirParams;
use crate::stats;

/// Fine steps per observation interval.
pub const SUBSTEPS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SkorohodTerms {
    pub main: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub h4: f64,
    pub h5: f64,
    pub h6: f64,
    /// `H1 + H2 + H3`.
    pub h: f64,
    /// `main + H - H4 - H5 - H6`.
    pub total: f64,
    /// `Σ dB_j`.
    pub brownian: f64,
    /// `X_Δ`.
    pub x_end: f64,
}

/// Brownian and jump increments on the fine grid of one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalNoise {
    pub db: Vec<f64>,
    pub dj: Vec<f64>,
}

impl IntervalNoise {
    pub fn zero(substeps: usize) -> IntervalNoise {
        IntervalNoise {
            db: vec![0.0; substeps],
            dj: vec![0.0; substeps],
        }
    }

    pub fn substeps(&self) -> usize {
        self.db.len()
    }
}

/// Draws [`IntervalNoise`] for a fixed `(Δ, n)`.
pub struct NoiseSampler {
    normal: Normal<f64>,
    jumps: JumpSampler,
    substeps: usize,
}

impl NoiseSampler {
    pub fn new(p: &CirParams, delta: f64, substeps: usize) -> Result<NoiseSampler> {
        if !(delta > 0.0 && delta.is_finite()) || substeps == 0 {
            return Err(invalid(format!("need Δ > 0 and substeps >= 1, got {delta}, {substeps}")));
        }
        let h = delta / substeps as f64;
        Ok(NoiseSampler {
            normal: Normal::new(0.0, h.sqrt()).map_err(|e| invalid(e.to_string()))?,
            jumps: p.levy.sampler(h, None)?,
            substeps,
        })
    }

    pub fn sample<R1: Rng + ?Sized, R2: Rng + ?Sized>(&self, noise: &mut R1, jumps: &mut R2) -> IntervalNoise {
        IntervalNoise {
            db: (0..self.substeps).map(|_| self.normal.sample(noise)).collect(),
            dj: (0..self.substeps).map(|_| self.jumps.step(jumps).total()).collect(),
        }
    }
}

struct Chain {
    x: Vec<f64>,
    p: Vec<f64>,
    /// `1 - bh + σ dB_j / (2 sqrt(X_j))`
    m: Vec<f64>,
}

fn euler_chain(p: &CirParams, b: f64, x0: f64, h: f64, noise: &IntervalNoise) -> Result<Chain> {
    let n = noise.substeps();
    let mut xs = Vec::with_capacity(n + 1);
    let mut ps = Vec::with_capacity(n + 1);
    let mut ms = Vec::with_capacity(n);
    xs.push(x0);
    ps.push(1.0);
    for j in 0..n {
        let x = xs[j];
        if !(x > 0.0) {
            return Err(Error::FlowUndefined { step: j, state: x });
        }
        let root = x.sqrt();
        let m = 1.0 - b * h + p.sigma * noise.db[j] / (2.0 * root);
        xs.push(x + (p.a - b * x) * h + p.sigma * root * noise.db[j] + noise.dj[j]);
        let next = ps[j] * m;
        if !(next > 0.0) {
            return Err(Error::FlowUndefined { step: j + 1, state: xs[j + 1] });
        }
        ps.push(next);
        ms.push(m);
    }
    Ok(Chain { x: xs, p: ps, m: ms })
}

/// Euler endpoint `X_Δ` under drift parameter `b`.
pub fn euler_endpoint(p: &CirParams, b: f64, x: f64, delta: f64, noise: &IntervalNoise) -> Result<f64> {
    let h = delta / noise.substeps() as f64;
    Ok(*euler_chain(p, b, x, h, noise)?.x.last().expect("chain is nonempty"))
}

/// All terms of the decomposition on one interval started at `x`.
pub fn skorohod_terms(p: &CirParams, x: f64, delta: f64, noise: &IntervalNoise) -> Result<SkorohodTerms> {
    if !(x > 0.0) {
        return Err(Error::FlowUndefined { step: 0, state: x });
    }
    let n = noise.substeps();
    let h = delta / n as f64;
    let s = p.sigma;
    let s2 = s * s;
    let b = p.b;
    let ch = euler_chain(p, b, x, h, noise)?;
    let (xs, ps, ms) = (&ch.x, &ch.p, &ch.m);
    let db = &noise.db;

    let brownian: f64 = db.iter().sum();
    let mut a_full = 0.0;
    let mut a_centered = 0.0;
    let mut ito = 0.0;
    for j in 0..n {
        a_full -= xs[j] * h / ps[j + 1];
        a_centered -= h * (xs[j] / ps[j + 1] - x);
        ito += ps[j] / (s * xs[j].sqrt()) * db[j];
    }

    // ∂A/∂dB_j by forward propagation of (∂X_l, ∂P_l) for l > j
    let mut weight = 0.0;
    for j in 0..n {
        let root = xs[j].sqrt();
        let g_next = ps[j + 1] / (s * root);
        let mut dx = s * root;
        let mut dp = ps[j] * s / (2.0 * root);
        let mut sum = -xs[j] * dp / (ps[j + 1] * ps[j + 1]);
        for l in j + 1..n {
            let dp_next = dp * ms[l] - ps[l] * s * db[l] * dx / (4.0 * xs[l] * xs[l].sqrt());
            sum += dx / ps[l + 1] - xs[l] * dp_next / (ps[l + 1] * ps[l + 1]);
            dx *= ms[l];
            dp = dp_next;
        }
        let da = -h * sum;
        weight += a_full * g_next * db[j] - h * (da * g_next + a_full * ps[j] / (2.0 * xs[j]));
    }

    let lead = -(delta / s) * x.sqrt() * brownian;
    let h1 = -x * delta * (ito - brownian / (s * x.sqrt()));
    let h2 = a_centered * ito;
    let h3 = weight - lead - h1 - h2;

    let x_end = xs[n];
    let mut drift_dev = 0.0;
    let mut root_dev = 0.0;
    for j in 0..n {
        drift_dev += (xs[j] - x) * h;
        root_dev += (xs[j].sqrt() - x.sqrt()) * db[j];
    }
    let jumps: f64 = noise.dj.iter().sum();
    let main = -(delta / s2) * (x_end - x - (p.a - b * x) * delta);
    let h4 = (delta / s2) * b * drift_dev;
    let h5 = -(delta / s) * root_dev;
    let h6 = -(delta / s2) * jumps;
    let hsum = h1 + h2 + h3;
    Ok(SkorohodTerms {
        main,
        h1,
        h2,
        h3,
        h4,
        h5,
        h6,
        h: hsum,
        total: main + hsum - h4 - h5 - h6,
        brownian,
        x_end,
    })
}

/// `H3 = -∫ D_s A · P_s/(σ sqrt(X_s)) ds` evaluated from the closed form of
/// `D_s(X_r/P_r) = σ sqrt(X_s)/P_s - (X_r/P_r) D_s P_r / P_r` with
/// left-point sums for the inner `du` and `dB_u` integrals. A diagnostic
/// for the discrete `H3`, which it approaches as the fine grid is refined.
pub fn h3_closed_form(p: &CirParams, x: f64, delta: f64, noise: &IntervalNoise) -> Result<f64> {
    let n = noise.substeps();
    let h = delta / n as f64;
    let s = p.sigma;
    let ch = euler_chain(p, p.b, x, h, noise)?;
    let (xs, ps) = (&ch.x, &ch.p);
    let mut total = 0.0;
    for j in 0..n {
        let root = xs[j].sqrt();
        // D_j P_l / P_l accumulated over u = j..l-1
        let mut log_deriv = s / (2.0 * root);
        let mut d_a = 0.0;
        for l in j + 1..n {
            let u = l - 1;
            let d_xu = if u == j { s * root } else { s * root * ps[u] / ps[j] };
            log_deriv += (s * s * h / (8.0 * xs[u] * xs[u]) - s * noise.db[u] / (4.0 * xs[u] * xs[u].sqrt())) * d_xu;
            d_a -= h * (s * root / ps[j] - xs[l] / ps[l] * log_deriv);
        }
        total -= h * d_a * ps[j] / (s * root);
    }
    Ok(total)
}

/// Test functions for the integration-by-parts check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum TestFunction {
    One,
    /// `e^{-rate y}`.
    Exp { rate: f64 },
    /// `exp(-1/(1 - r²))` for `r = (y - center)/half_width`, `|r| < 1`.
    Bump { center: f64, half_width: f64 },
}

impl TestFunction {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            TestFunction::One => 1.0,
            TestFunction::Exp { rate } => (-rate * y).exp(),
            TestFunction::Bump { center, half_width } => {
                let r = (y - center) / half_width;
                if r.abs() < 1.0 {
                    (-1.0 / (1.0 - r * r)).exp()
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IbpReport {
    pub function: TestFunction,
    pub replications: usize,
    /// `(1/Δ) mean f(X_Δ) δ`.
    pub lhs: f64,
    /// `∂_b E[f(X_Δ)]`.
    pub rhs: f64,
    pub se: f64,
    pub z: f64,
    /// Half width of the 95% interval for `lhs - rhs`.
    pub ci_half_width: f64,
}

/// Bump step for the common-random-number difference quotient.
const FD_STEP: f64 = 1e-3;

/// Monte Carlo check of `(1/Δ) E[f(X_Δ) δ] = ∂_b E[f(X_Δ)]` from `x`.
///
/// For `f = e^{-ry}` the right side is `(∂_bφ + x ∂_bψ) e^{φ + xψ}` at
/// `u = -r`; for the bump it is a central difference of the Euler mean on
/// common noise, formed path by path so that the standard error covers both
/// sides.
pub fn ibp_check(p: &CirParams, x: f64, delta: f64, f: TestFunction, m: usize, seed: u64) -> Result<IbpReport> {
    p.validate()?;
    if 2.0 * p.a <= p.sigma * p.sigma {
        return Err(Error::DensityRegime {
            two_a: 2.0 * p.a,
            sigma_sq: p.sigma * p.sigma,
        });
    }
    if m < 1000 {
        return Err(invalid(format!("ibp check needs at least 1000 replications, got {m}")));
    }
    let sampler = NoiseSampler::new(p, delta, SUBSTEPS)?;
    let samples: Result<Vec<(f64, f64)>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut nb = rng::stream(seed, "malliavin-brownian", i as u64);
            let mut nj = rng::stream(seed, "malliavin-jumps", i as u64);
            let noise = sampler.sample(&mut nb, &mut nj);
            let t = skorohod_terms(p, x, delta, &noise)?;
            let weighted = f.eval(t.x_end) * t.total / delta;
            let fd = match f {
                TestFunction::Bump { .. } => {
                    let up = f.eval(euler_endpoint(p, p.b + FD_STEP, x, delta, &noise)?);
                    let down = f.eval(euler_endpoint(p, p.b - FD_STEP, x, delta, &noise)?);
                    (up - down) / (2.0 * FD_STEP)
                }
                _ => 0.0,
            };
            Ok((weighted, fd))
        })
        .collect();
    let samples = samples?;
    let lhs_vals: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let lhs = stats::mean(&lhs_vals);
    let (rhs, se) = match f {
        TestFunction::One => (0.0, stats::std_error(&lhs_vals)),
        TestFunction::Exp { rate } => {
            let u = num_complex::Complex64::new(-rate, 0.0);
            let scale = phi_db(p, delta, u)? + psi_db(p, delta, u) * x;
            let base = char_fn(p, delta, x, u)?;
            // keep psi's domain check in the error path
            psi(p, delta, u)?;
            ((scale * base).re, stats::std_error(&lhs_vals))
        }
        TestFunction::Bump { .. } => {
            let fd: Vec<f64> = samples.iter().map(|s| s.1).collect();
            let diff: Vec<f64> = samples.iter().map(|s| s.0 - s.1).collect();
            (stats::mean(&fd), stats::std_error(&diff))
        }
    };
    let z = if se > 0.0 { (lhs - rhs) / se } else { 0.0 };
    Ok(IbpReport {
        function: f,
        replications: m,
        lhs,
        rhs,
        se,
        z,
        ci_half_width: 1.96 * se,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub delta: f64,
    #[serde(rename = "mean_H")]
    pub mean_h: f64,
    pub se: f64,
    #[serde(rename = "m2_H")]
    pub m2_h: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub x: f64,
    pub replications: usize,
    pub rows: Vec<ScanRow>,
    /// Least-squares slope of `log E[H²]` on `log Δ`.
    pub slope: f64,
}

impl ScanReport {
    /// CSV with columns `delta,mean_H,se,m2_H,slope`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub const DEFAULT_DELTAS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];

/// Per-`Δ` terms of `M` independent intervals from `x`.
pub fn sample_terms(p: &CirParams, x: f64, delta: f64, m: usize, seed: u64, stream: u64) -> Result<Vec<SkorohodTerms>> {
    let sampler = NoiseSampler::new(p, delta, SUBSTEPS)?;
    (0..m)
        .into_par_iter()
        .map(|i| {
            let index = (stream << 40) | i as u64;
            let mut nb = rng::stream(seed, "malliavin-brownian", index);
            let mut nj = rng::stream(seed, "malliavin-jumps", index);
            skorohod_terms(p, x, delta, &sampler.sample(&mut nb, &mut nj))
        })
        .collect()
}

/// Mean and second moment of `H` on a `Δ` grid, with the log-log slope of
/// the second moment. Requires the discrete-observation condition on `a/σ²`.
pub fn h_moment_scan(p: &CirParams, x: f64, deltas: &[f64], m: usize, seed: u64) -> Result<ScanReport> {
    p.check_discrete_condition()?;
    scan_moments(p, x, deltas, m, seed)
}

/// [`h_moment_scan`] without the check on `a/σ²`.
pub fn scan_moments(p: &CirParams, x: f64, deltas: &[f64], m: usize, seed: u64) -> Result<ScanReport> {
    p.validate()?;
    if deltas.len() < 2 {
        return Err(invalid("moment scan needs at least two step sizes"));
    }
    let mut rows = Vec::with_capacity(deltas.len());
    for (d, &delta) in deltas.iter().enumerate() {
        let terms = sample_terms(p, x, delta, m, seed, d as u64)?;
        let hs: Vec<f64> = terms.iter().map(|t| t.h).collect();
        let sq: Vec<f64> = hs.iter().map(|h| h * h).collect();
        rows.push(ScanRow {
            delta,
            mean_h: stats::mean(&hs),
            se: stats::std_error(&hs),
            m2_h: stats::mean(&sq),
            slope: f64::NAN,
        });
    }
    let lx: Vec<f64> = rows.iter().map(|r| r.delta.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.m2_h.ln()).collect();
    let (slope, _) = stats::linear_fit(&lx, &ly);
    for r in &mut rows {
        r.slope = slope;
    }
    Ok(ScanReport {
        x,
        replications: m,
        rows,
        slope,
    })
}
