//! Exponential-affine transform `E_x[e^{u Y_t}] = exp(φ(t,u) + x ψ(t,u))`,
//! Fourier inversion to the transition density and its b-derivative, and
//! the Laplace transforms of the stationary law and the supercritical limit.
//!
//! With `D(t,u) = 1 - (σ²u/2) g(b,t)` and `g(b,t) = (1-e^{-bt})/b`,
//!
//! ```text
//! ψ(t,u) = u e^{-bt} / D,      a ∫_0^t ψ ds = -(2a/σ²) Log D,
//! φ(t,u) = a ∫_0^t ψ ds + ∫_0^t F_J(ψ(s,u)) ds.
//! ```
//!
//! `Re D >= 1` whenever `Re u <= 0`, so the principal logarithm is continuous.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::levy::clog1p;
use crate::quad::{gauss_legendre, integrate, QuadOptions};
use crate::sim::{decay_integral, CirParams};

type C64 = Complex64;

const TAIL_TOL: f64 = 1e-12;
const GL_POINTS: usize = 10;
/// Product of panel width and integrand frequency bound.
const PANEL_PHASE: f64 = 4.0;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `∂g/∂b`, by series for small `|bt|` where the closed form cancels.
pub fn decay_integral_db(b: f64, t: f64) -> f64 {
    let x = b * t;
    if x.abs() < 0.1 {
        // Σ_{k>=2} (-1)^{k-1} (k-1) b^{k-2} t^k / k!
        let mut sum = 0.0;
        let mut term = t * t / 2.0; // t^k b^{k-2} / k! at k = 2
        for k in 2..20 {
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            sum += sign * (k - 1) as f64 * term;
            term *= x / (k + 1) as f64;
        }
        sum
    } else {
        (x * (-x).exp() + (-x).exp_m1()) / (b * b)
    }
}

fn denom(p: &CirParams, t: f64, u: C64) -> C64 {
    c(1.0) - u * (0.5 * p.sigma * p.sigma * decay_integral(p.b, t))
}

/// Explicit Riccati solution `ψ(t, u)`.
pub fn psi(p: &CirParams, t: f64, u: C64) -> Result<C64> {
    if u.re > 0.0 {
        return Err(invalid(format!("psi needs Re u <= 0, got {u}")));
    }
    let d = denom(p, t, u);
    if d.norm() < 1e-300 {
        return Err(Error::Accuracy(format!("psi denominator vanished at t={t}, u={u}")));
    }
    Ok(u * (-p.b * t).exp() / d)
}

fn psi_unchecked(p: &CirParams, t: f64, u: C64) -> C64 {
    u * (-p.b * t).exp() / denom(p, t, u)
}

/// `∂ψ/∂b` by the quotient rule.
pub fn psi_db(p: &CirParams, t: f64, u: C64) -> C64 {
    let d = denom(p, t, u);
    let e = (-p.b * t).exp();
    let half_s2u = u * (0.5 * p.sigma * p.sigma);
    (-u * (t * e) * d + u * e * half_s2u * decay_integral_db(p.b, t)) / (d * d)
}

fn phi_opts() -> QuadOptions {
    QuadOptions::with_tol(1e-15, 1e-12)
}

/// `a ∫_0^t ψ ds` in closed form.
pub fn phi_diffusion(p: &CirParams, t: f64, u: C64) -> C64 {
    let w = -u * (0.5 * p.sigma * p.sigma * decay_integral(p.b, t));
    clog1p(w) * (-2.0 * p.a / (p.sigma * p.sigma))
}

/// `φ(t, u)`; the jump part by adaptive quadrature in `s`.
pub fn phi(p: &CirParams, t: f64, u: C64) -> Result<C64> {
    if u.re > 0.0 {
        return Err(invalid(format!("phi needs Re u <= 0, got {u}")));
    }
    let mut value = phi_diffusion(p, t, u);
    if p.levy != crate::levy::LevyMeasure::Zero && t > 0.0 {
        let jump = integrate(|s| p.levy.laplace_exponent(psi_unchecked(p, s, u)), 0.0, t, &phi_opts())?;
        value += jump.value;
    }
    Ok(value)
}

/// `∂φ/∂b = a u g'(b)/D + ∫_0^t F_J'(ψ) ∂_b ψ ds`.
pub fn phi_db(p: &CirParams, t: f64, u: C64) -> Result<C64> {
    let mut value = u * (p.a * decay_integral_db(p.b, t)) / denom(p, t, u);
    if p.levy != crate::levy::LevyMeasure::Zero && t > 0.0 {
        let jump = integrate(
            |s| p.levy.laplace_exponent_deriv(psi_unchecked(p, s, u)) * psi_db(p, s, u),
            0.0,
            t,
            &phi_opts(),
        )?;
        value += jump.value;
    }
    Ok(value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharEval {
    pub t: f64,
    pub u: (f64, f64),
    pub psi: (f64, f64),
    pub phi: (f64, f64),
    pub value: (f64, f64),
}

/// `E_x[e^{u Y_t}] = exp(φ + x ψ)`.
pub fn char_fn(p: &CirParams, t: f64, x: f64, u: C64) -> Result<C64> {
    Ok((phi(p, t, u)? + psi(p, t, u)? * x).exp())
}

pub fn char_eval(p: &CirParams, t: f64, x: f64, u: C64) -> Result<CharEval> {
    let ps = psi(p, t, u)?;
    let ph = phi(p, t, u)?;
    let v = (ph + ps * x).exp();
    Ok(CharEval {
        t,
        u: (u.re, u.im),
        psi: (ps.re, ps.im),
        phi: (ph.re, ph.im),
        value: (v.re, v.im),
    })
}

/// Closed-form transition density of the diffusion CIR (no jumps): `Y_t/c`
/// is noncentral chi-square with `4a/σ²` degrees of freedom and
/// noncentrality `x e^{-bt}/c`, `c = σ² g(b,t)/4`. Summed as a Poisson
/// mixture in log space outward from the dominant term.
pub fn diffusion_density(a: f64, b: f64, sigma: f64, t: f64, x: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let cc = 0.25 * sigma * sigma * decay_integral(b, t);
    let df = 4.0 * a / (sigma * sigma);
    let lam = x * (-b * t).exp() / cc;
    let z = y / cc;
    let log_term = |i: f64| -> f64 {
        let k = 0.5 * df + i;
        let log_pois = if lam > 0.0 {
            -0.5 * lam + i * (0.5 * lam).ln() - ln_gamma(i + 1.0)
        } else if i == 0.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        };
        log_pois + (k - 1.0) * z.ln() - 0.5 * z - k * 2f64.ln() - ln_gamma(k)
    };
    let mode = (0.5 * lam).floor();
    let peak = log_term(mode);
    let mut sum = 1.0;
    let mut i = mode + 1.0;
    loop {
        let r = (log_term(i) - peak).exp();
        sum += r;
        if r < 1e-17 * sum || i > mode + 1e6 {
            break;
        }
        i += 1.0;
    }
    let mut i = mode - 1.0;
    while i >= 0.0 {
        let r = (log_term(i) - peak).exp();
        sum += r;
        if r < 1e-17 * sum {
            break;
        }
        i -= 1.0;
    }
    (peak + sum.ln()).exp() / cc
}

struct Node {
    v: f64,
    weight: f64,
    phi: C64,
    psi: C64,
    dphi: C64,
    dpsi: C64,
}

struct PanelEnd {
    v: f64,
    re_psi: f64,
    deriv_scale: f64,
}

/// Precomputed `(φ, ψ, ∂_bφ, ∂_bψ)` at the Gauss–Legendre nodes of a
/// uniform panel grid on `[0, U_max]`, for one `(params, t)`.
///
/// `p(t,x,y) = (1/π) Re ∫_0^∞ e^{-iyv} E_x[e^{ivY_t}] dv`. The integrand is
/// summed panel by panel until the tail bound
/// `|E_x[e^{ivY}]| <= (1+κ²v²)^{-a/σ²} e^{x Re ψ(iv)}` (jump factor at most 1,
/// `κ = σ² g/2`, both factors decreasing in `v`), integrated from the panel end
/// to ∞, falls below the tolerance.
pub struct CharTable {
    t: f64,
    kappa: f64,
    power: f64,
    with_db: bool,
    panel_nodes: usize,
    nodes: Vec<Node>,
    ends: Vec<PanelEnd>,
    pub panel_width: f64,
}

/// Bound on the integrand frequency for a density at `(x, y)`.
pub fn frequency_bound(p: &CirParams, t: f64, x: f64, y: f64) -> f64 {
    let g = decay_integral(p.b, t);
    let jump_speed = 2.0 * p.jump_mean() * t * (-p.b * t).exp().max(1.0);
    y.abs() + x * (-p.b * t).exp() + p.a * g + jump_speed + 1.0
}

impl CharTable {
    /// Table for `t`, accurate for integrand frequencies up to `omega`
    /// and starting states `x >= x_min`.
    pub fn build(p: &CirParams, t: f64, omega: f64, x_min: f64, with_db: bool) -> Result<CharTable> {
        p.validate()?;
        let s2 = p.sigma * p.sigma;
        if 2.0 * p.a <= s2 {
            return Err(Error::DensityRegime { two_a: 2.0 * p.a, sigma_sq: s2 });
        }
        if !(t > 0.0) {
            return Err(invalid(format!("density needs t > 0, got {t}")));
        }
        let kappa = 0.5 * s2 * decay_integral(p.b, t);
        let power = p.a / s2;
        let mut table = CharTable {
            t,
            kappa,
            power,
            with_db,
            panel_nodes: GL_POINTS,
            nodes: Vec::new(),
            ends: Vec::new(),
            panel_width: 0.0,
        };
        // find the truncation point for the smallest starting state
        let mut u_max = 1.0;
        while table.tail_bound(p, u_max, x_min.max(0.0), table.deriv_scale(p, u_max)) > TAIL_TOL {
            u_max *= 2.0;
            if u_max > 1e8 {
                return Err(Error::Accuracy("characteristic function decays too slowly".into()));
            }
        }
        let h = (PANEL_PHASE / omega.max(1e-3)).min(u_max / 4.0);
        let panels = (u_max / h).ceil() as usize;
        table.panel_width = h;
        let (gx, gw) = gauss_legendre(GL_POINTS);
        let mut specs = Vec::with_capacity(panels * GL_POINTS);
        for k in 0..panels {
            let lo = k as f64 * h;
            for (xi, wi) in gx.iter().zip(&gw) {
                specs.push((lo + 0.5 * h * (xi + 1.0), 0.5 * h * wi));
            }
        }
        let nodes: Result<Vec<Node>> = specs
            .par_iter()
            .map(|&(v, weight)| {
                let u = C64::new(0.0, v);
                let (dphi, dpsi) = if with_db {
                    (phi_db(p, t, u)?, psi_db(p, t, u))
                } else {
                    (C64::new(0.0, 0.0), C64::new(0.0, 0.0))
                };
                Ok(Node {
                    v,
                    weight,
                    phi: phi(p, t, u)?,
                    psi: psi(p, t, u)?,
                    dphi,
                    dpsi,
                })
            })
            .collect();
        table.nodes = nodes?;
        table.ends = (1..=panels)
            .map(|k| {
                let v = k as f64 * h;
                PanelEnd {
                    v,
                    re_psi: psi_unchecked(p, t, C64::new(0.0, v)).re,
                    deriv_scale: if with_db { table.deriv_scale(p, v) } else { 0.0 },
                }
            })
            .collect();
        Ok(table)
    }

    /// Table sized for one `(x, y)` pair.
    pub fn for_point(p: &CirParams, t: f64, x: f64, y: f64, with_db: bool) -> Result<CharTable> {
        CharTable::build(p, t, frequency_bound(p, t, x, y), x, with_db)
    }

    /// Rough bound on `|∂_bφ| + x|∂_bψ|` beyond `v`, for the derivative tail.
    fn deriv_scale(&self, p: &CirParams, v: f64) -> f64 {
        let u = C64::new(0.0, v);
        let diff = (u * (p.a * decay_integral_db(p.b, self.t)) / denom(p, self.t, u)).norm();
        let jumps = p.jump_mean() * self.t * self.t * (1.0 + (-p.b * self.t).exp());
        2.0 * (diff + psi_db(p, self.t, u).norm() + jumps + 1.0)
    }

    fn tail_bound_parts(&self, v: f64, x: f64, re_psi: f64, scale: f64) -> f64 {
        let kv = self.kappa * v;
        let env = (-self.power * (kv * kv).ln_1p() + x * re_psi).exp();
        let slack = (1.0 + 1.0 / (kv * kv)).powf(self.power);
        env * v / (2.0 * self.power - 1.0) * slack * (1.0 + scale * (1.0 + x)) / std::f64::consts::PI
    }

    fn tail_bound(&self, p: &CirParams, v: f64, x: f64, scale: f64) -> f64 {
        let re_psi = psi_unchecked(p, self.t, C64::new(0.0, v)).re;
        self.tail_bound_parts(v, x, re_psi, if self.with_db { scale } else { 0.0 })
    }

    fn invert(&self, x: f64, y: f64, derivative: bool) -> Result<(f64, f64, usize)> {
        let mut dens = 0.0;
        let mut deriv = 0.0;
        let m = self.panel_nodes;
        for (k, end) in self.ends.iter().enumerate() {
            for node in &self.nodes[k * m..(k + 1) * m] {
                let z = (node.phi + node.psi * x + C64::new(0.0, -y * node.v)).exp() * node.weight;
                dens += z.re;
                if derivative {
                    deriv += ((node.dphi + node.dpsi * x) * z).re;
                }
            }
            let scale = if derivative { end.deriv_scale } else { 0.0 };
            if self.tail_bound_parts(end.v, x, end.re_psi, scale) < TAIL_TOL {
                return Ok((dens / std::f64::consts::PI, deriv / std::f64::consts::PI, k + 1));
            }
        }
        Err(Error::Accuracy(format!(
            "fourier truncation not reached for x = {x} (table built for larger states)"
        )))
    }

    fn clamp(value: f64, x: f64, y: f64) -> Result<f64> {
        if value >= 0.0 {
            Ok(value)
        } else if value > -1e-12 {
            Ok(0.0)
        } else {
            Err(Error::Accuracy(format!("negative density {value:e} at x = {x}, y = {y}")))
        }
    }

    pub fn density(&self, x: f64, y: f64) -> Result<f64> {
        check_point(x, y)?;
        let (d, _, _) = self.invert(x, y, false)?;
        Self::clamp(d, x, y)
    }

    /// `(p, ∂_b p)`.
    pub fn density_with_db(&self, x: f64, y: f64) -> Result<(f64, f64)> {
        check_point(x, y)?;
        if !self.with_db {
            return Err(invalid("table built without b-derivatives"));
        }
        let (d, db, _) = self.invert(x, y, true)?;
        Ok((Self::clamp(d, x, y)?, db))
    }

    /// Number of panels used at `(x, y)`.
    pub fn panels_used(&self, x: f64, y: f64) -> Result<usize> {
        Ok(self.invert(x, y, false)?.2)
    }

    pub fn panel_count(&self) -> usize {
        self.ends.len()
    }

    pub fn truncation(&self) -> f64 {
        self.ends.last().map_or(0.0, |e| e.v)
    }
}

fn check_point(x: f64, y: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(invalid(format!("density needs x >= 0, got {x}")));
    }
    if !(y > 0.0 && y.is_finite()) {
        return Err(invalid(format!("density needs y > 0, got {y}")));
    }
    Ok(())
}

/// `p(t, x, y)` by Fourier inversion.
pub fn transition_density(p: &CirParams, t: f64, x: f64, y: f64) -> Result<f64> {
    check_point(x, y)?;
    CharTable::for_point(p, t, x, y, false)?.density(x, y)
}

/// `∂p(t, x, y)/∂b` by Fourier inversion of `(∂_bφ + x ∂_bψ) e^{φ + xψ}`.
pub fn transition_density_db(p: &CirParams, t: f64, x: f64, y: f64) -> Result<f64> {
    check_point(x, y)?;
    Ok(CharTable::for_point(p, t, x, y, true)?.density_with_db(x, y)?.1)
}

/// Density and b-derivative on a y-grid.
#[derive(Debug, Clone, Serialize)]
pub struct DensityGrid {
    pub t: f64,
    pub x: f64,
    pub y: Vec<f64>,
    pub density: Vec<f64>,
    pub density_db: Vec<f64>,
    pub truncation: f64,
    pub panels: usize,
    pub tail_tolerance: f64,
}

impl DensityGrid {
    pub fn compute(p: &CirParams, t: f64, x: f64, ys: &[f64]) -> Result<DensityGrid> {
        let y_max = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
        let table = CharTable::build(p, t, frequency_bound(p, t, x, y_max), x, true)?;
        let values: Result<Vec<(f64, f64)>> = ys.par_iter().map(|&y| table.density_with_db(x, y)).collect();
        let values = values?;
        Ok(DensityGrid {
            t,
            x,
            y: ys.to_vec(),
            density: values.iter().map(|v| v.0).collect(),
            density_db: values.iter().map(|v| v.1).collect(),
            truncation: table.truncation(),
            panels: table.panel_count(),
            tail_tolerance: TAIL_TOL,
        })
    }

    /// CSV with columns `y,p,dp_db`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["y", "p", "dp_db"])?;
        for i in 0..self.y.len() {
            out.write_record(&[
                format!("{}", self.y[i]),
                format!("{}", self.density[i]),
                format!("{}", self.density_db[i]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Laplace transform `E[e^{uY_∞}]` of the stationary law (b > 0, u <= 0):
/// `exp ∫_u^0 F(v)/R(v) dv` with `F(v)/R(v) = (a + F_J(v)/v)/(σ²v/2 - b)`,
/// which is regular at `v = 0`.
pub fn stationary_laplace(p: &CirParams, u: f64) -> Result<f64> {
    if !(p.b > 0.0) {
        return Err(invalid(format!("stationary law needs b > 0, got {}", p.b)));
    }
    if u > 0.0 {
        return Err(invalid(format!("stationary laplace transform needs u <= 0, got {u}")));
    }
    if u == 0.0 {
        return Ok(1.0);
    }
    let s2 = p.sigma * p.sigma;
    let f = |v: f64| (p.a + p.levy.laplace_exponent_over_u(c(v)).re) / (0.5 * s2 * v - p.b);
    let r = integrate(f, u, 0.0, &QuadOptions::with_tol(1e-15, 1e-13))?;
    Ok(r.value.exp())
}

/// Laplace transform `E[e^{uV}]` of `V = lim e^{bt} Y_t` (b < 0, u <= 0).
pub fn v_laplace(p: &CirParams, u: f64) -> Result<f64> {
    if !(p.b < 0.0) {
        return Err(invalid(format!("supercritical limit needs b < 0, got {}", p.b)));
    }
    if u > 0.0 {
        return Err(invalid(format!("limit laplace transform needs u <= 0, got {u}")));
    }
    let s2 = p.sigma * p.sigma;
    let base = 1.0 + s2 * u / (2.0 * p.b);
    if !(base > 0.0) {
        return Err(invalid(format!("1 + σ²u/(2b) = {base} is outside the validity range")));
    }
    let mut log_value = u * p.y0 / base - 2.0 * p.a / s2 * base.ln();
    if p.levy != crate::levy::LevyMeasure::Zero && u != 0.0 {
        // y -> s = e^{by} maps (0, ∞) onto (0, 1), dy = ds / (|b| s)
        let f = |s: f64| {
            let scale = u / (1.0 + s2 * u * s / (2.0 * p.b));
            let w = scale * s;
            (p.levy.laplace_exponent_over_u(c(w)).re * scale) / p.b.abs()
        };
        log_value += integrate(f, 0.0, 1.0, &QuadOptions::with_tol(1e-15, 1e-13))?.value;
    }
    Ok(log_value.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevyMeasure;

    fn cpe() -> LevyMeasure {
        LevyMeasure::CompoundPoissonExponential { intensity: 1.0, decay: 2.0 }
    }

    fn params(b: f64, levy: LevyMeasure) -> CirParams {
        CirParams::new(2.0, b, 0.5, 2.5, levy)
    }

    #[test]
    fn decay_integral_derivative_series_and_closed_form_agree() {
        for &t in &[0.05, 1.0, 3.0] {
            for &b in &[-2.0, -0.3, -1e-3, 0.0, 1e-9, 0.02, 0.5, 4.0] {
                let h = 1e-5;
                let fd = (decay_integral(b + h, t) - decay_integral(b - h, t)) / (2.0 * h);
                let v = decay_integral_db(b, t);
                assert!((v - fd).abs() < 1e-8 * (1.0 + fd.abs()), "b={b} t={t}: {v} vs {fd}");
            }
        }
        assert_eq!(decay_integral_db(0.0, 2.0), -2.0);
    }

    #[test]
    fn psi_examples() {
        let p = CirParams::new(1.0, 0.0, 1.0, 1.0, LevyMeasure::Zero);
        assert_eq!(psi(&p, 1.0, c(0.0)).unwrap(), c(0.0));
        let u = C64::new(-0.4, 2.0);
        assert!((psi(&p.with_b(0.7), 0.0, u).unwrap() - u).norm() < 1e-16);
        assert!((psi(&p, 2.0, c(-1.0)).unwrap() - c(-0.5)).norm() < 1e-16);
        assert!((psi(&p.with_b(1e-8), 2.0, c(-1.0)).unwrap() - c(-0.5)).norm() < 1e-8);
        assert!(psi(&p, 1.0, c(0.1)).is_err());
    }

    #[test]
    fn psi_solves_riccati_and_flows() {
        let p = params(0.8, cpe());
        let u = C64::new(-0.3, 1.7);
        let t = 0.6;
        let h = 1e-5;
        let dt = (psi(&p, t + h, u).unwrap() - psi(&p, t - h, u).unwrap()) / (2.0 * h);
        let q = psi(&p, t, u).unwrap();
        let r = q * q * (0.5 * p.sigma * p.sigma) - q * p.b;
        assert!((dt - r).norm() < 1e-8);
        for &b in &[-0.5, 0.0, 1.0] {
            let p = p.with_b(b);
            for &(t, s) in &[(0.3, 0.7), (1.0, 2.0), (0.01, 5.0)] {
                for &u in &[c(-1.0), C64::new(0.0, 3.0), C64::new(-2.0, -50.0)] {
                    let lhs = psi(&p, t + s, u).unwrap();
                    let rhs = psi(&p, t, psi(&p, s, u).unwrap()).unwrap();
                    assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
                }
            }
        }
    }

    #[test]
    fn psi_db_matches_finite_difference() {
        for &b in &[-0.5, 0.0, 1e-7, 1.3] {
            let p = params(b, cpe());
            let u = C64::new(-0.5, 4.0);
            let h = 1e-6;
            let fd = (psi(&p.with_b(b + h), 0.7, u).unwrap() - psi(&p.with_b(b - h), 0.7, u).unwrap()) / (2.0 * h);
            assert!((psi_db(&p, 0.7, u) - fd).norm() < 1e-7 * (1.0 + fd.norm()));
        }
    }

    #[test]
    fn phi_examples() {
        let p = CirParams::new(1.5, 0.0, 0.7, 1.0, LevyMeasure::Zero);
        assert_eq!(phi(&p, 2.0, c(0.0)).unwrap(), c(0.0));
        let u = C64::new(-0.8, 2.5);
        let t = 1.7;
        let expected = (c(1.0) - u * (0.5 * 0.49 * t)).ln() * (-2.0 * 1.5 / 0.49);
        assert!((phi(&p, t, u).unwrap() - expected).norm() < 1e-13);
        // numerical ∫ a ψ ds agrees with the closed form
        let q = integrate(|s| psi(&p, s, u).unwrap() * p.a, 0.0, t, &QuadOptions::default()).unwrap();
        assert!((q.value - expected).norm() < 1e-11);
        for m in [cpe(), LevyMeasure::GammaProcess { intensity: 1.0, decay: 3.0 }] {
            let p = params(0.4, m);
            let v = phi(&p, 1.0, c(-0.9)).unwrap();
            assert!(v.im.abs() < 1e-15 && v.re <= 0.0);
        }
    }

    #[test]
    fn phi_jump_part_matches_closed_form_for_exponential_jumps() {
        let (ci, lam) = (1.0, 2.0);
        let p = params(0.9, LevyMeasure::CompoundPoissonExponential { intensity: ci, decay: lam });
        for &u in &[c(-1.3), C64::new(0.0, 7.0), C64::new(-0.2, -30.0)] {
            let t = 0.8;
            let cc = 0.5 * p.sigma * p.sigma / p.b;
            let aa = u * (-cc) * lam + lam;
            let bb = u * (lam * cc - 1.0);
            let e = (-p.b * t).exp();
            let closed = -u * ci / (bb * p.b) * ((aa + bb * e) / (aa + bb)).ln();
            let jump = phi(&p, t, u).unwrap() - phi_diffusion(&p, t, u);
            assert!((jump - closed).norm() < 1e-11 * (1.0 + closed.norm()), "{u}: {jump} vs {closed}");
        }
    }

    #[test]
    fn phi_db_matches_finite_difference() {
        for m in [cpe(), LevyMeasure::InverseGaussian { delta: 1.0, gamma: 2.0 }] {
            for &b in &[-0.5, 0.0, 1.0] {
                let p = params(b, m.clone());
                let u = C64::new(-0.1, 6.0);
                let h = 1e-5;
                let fd = (phi(&p.with_b(b + h), 0.5, u).unwrap() - phi(&p.with_b(b - h), 0.5, u).unwrap()) / (2.0 * h);
                let v = phi_db(&p, 0.5, u).unwrap();
                assert!((v - fd).norm() < 1e-7 * (1.0 + fd.norm()), "{m:?} b={b}: {v} vs {fd}");
            }
        }
    }

    #[test]
    fn char_fn_normalization_and_bounds() {
        let p = params(1.0, cpe());
        assert_eq!(char_fn(&p, 0.7, 2.0, c(0.0)).unwrap(), c(1.0));
        for k in 0..50 {
            let v = -200.0 + 8.0 * k as f64;
            let z = char_fn(&p, 0.7, 2.0, C64::new(0.0, v)).unwrap();
            assert!(z.norm() <= 1.0 + 1e-15);
            assert!(psi(&p, 0.7, C64::new(0.0, v)).unwrap().re <= 0.0);
        }
        let z = char_fn(&p, 0.7, 2.0, c(-0.6)).unwrap();
        assert!(z.im.abs() < 1e-15 && z.re > 0.0 && z.re <= 1.0);
        let e = char_eval(&p, 0.7, 2.0, c(-0.6)).unwrap();
        assert_eq!(e.value.0, z.re);
    }

    #[test]
    fn char_fn_mean_by_derivative() {
        let p = params(0.6, cpe());
        let h = 1e-4;
        let f = |u: f64| char_fn(&p, 1.3, 2.5, c(u)).unwrap().re;
        // second-order one-sided stencil, u must stay <= 0
        let d = (3.0 * f(0.0) - 4.0 * f(-h) + f(-2.0 * h)) / (2.0 * h);
        let p2 = CirParams { y0: 2.5, ..p.clone() };
        assert!((d - p2.mean_at(1.3)).abs() < 1e-4, "{d} vs {}", p2.mean_at(1.3));
    }

    #[test]
    fn char_fn_decay_exponent() {
        let p = CirParams::new(2.0, 1.0, 1.0, 1.0, cpe());
        let t = 1.0;
        let vs: Vec<f64> = (0..20).map(|i| 10f64.powf(2.0 + 2.0 * i as f64 / 19.0)).collect();
        let logs: Vec<f64> = vs
            .iter()
            .map(|&v| char_fn(&p, t, 1.0, C64::new(0.0, v)).unwrap().norm().ln())
            .collect();
        let lv: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
        let (slope, _) = crate::stats::linear_fit(&lv, &logs);
        let target = -2.0 * p.a / (p.sigma * p.sigma);
        assert!((slope / target - 1.0).abs() < 0.1, "slope {slope}");
    }

    /// Independent oracle: Bessel-function form of the noncentral chi-square density.
    fn bessel_form(a: f64, b: f64, sigma: f64, t: f64, x: f64, y: f64) -> f64 {
        let cc = 0.25 * sigma * sigma * decay_integral(b, t);
        let k = 4.0 * a / (sigma * sigma);
        let lam = x * (-b * t).exp() / cc;
        let z = y / cc;
        let nu = k / 2.0 - 1.0;
        let arg = (lam * z).sqrt();
        // I_ν(arg) by its power series
        let mut term = (nu * (0.5 * arg).ln() - ln_gamma(nu + 1.0)).exp();
        let mut bessel = term;
        for m in 1..500 {
            term *= 0.25 * arg * arg / (m as f64 * (m as f64 + nu));
            bessel += term;
            if term < 1e-18 * bessel {
                break;
            }
        }
        0.5 / cc * (-(z + lam) / 2.0).exp() * (z / lam).powf(nu / 2.0) * bessel
    }

    #[test]
    fn chi_square_series_matches_bessel_form() {
        for &(a, b, s, t, x, y) in &[
            (2.0, 1.0, 0.5, 0.5, 2.5, 2.1),
            (1.0, -0.5, 1.0, 1.0, 0.7, 1.9),
            (3.0, 0.0, 0.8, 0.3, 1.0, 0.4),
        ] {
            let series = diffusion_density(a, b, s, t, x, y);
            let bessel = bessel_form(a, b, s, t, x, y);
            assert!((series - bessel).abs() < 1e-10 * bessel.max(1e-3), "{series} vs {bessel}");
        }
    }

    #[test]
    fn density_matches_chi_square_without_jumps() {
        for &(b, t, x) in &[(1.0, 0.05, 2.5), (-0.5, 0.5, 1.0), (0.0, 1.0, 3.0), (2.0, 0.2, 0.3)] {
            let p = CirParams::new(2.0, b, 0.5, x, LevyMeasure::Zero);
            let q = CirParams { y0: x, ..p.clone() };
            let (m, sd) = (q.mean_at(t), q.variance_at(t).sqrt());
            for k in -3..=4 {
                let y = m + k as f64 * sd;
                if y <= 0.0 {
                    continue;
                }
                let num = transition_density(&p, t, x, y).unwrap();
                let exact = diffusion_density(2.0, b, 0.5, t, x, y);
                assert!((num - exact).abs() < 1e-9, "b={b} t={t} x={x} y={y}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn density_regime_guard() {
        let p = CirParams::new(0.5, 1.0, 1.0, 1.0, LevyMeasure::Zero);
        assert!(matches!(transition_density(&p, 1.0, 1.0, 1.0), Err(Error::DensityRegime { .. })));
        let p = params(1.0, cpe());
        assert!(transition_density(&p, 1.0, 1.0, 0.0).is_err());
    }

    fn moments_by_quadrature(p: &CirParams, t: f64, x: f64, f: impl Fn(&CharTable, f64) -> f64) -> [f64; 2] {
        let table = CharTable::build(p, t, frequency_bound(p, t, x, 40.0), 1e-3, true).unwrap();
        let opts = QuadOptions::with_tol(1e-11, 1e-11);
        let z0 = integrate(|y| f(&table, y), 1e-9, 40.0, &opts).unwrap().value;
        let z1 = integrate(|y| y * f(&table, y), 1e-9, 40.0, &opts).unwrap().value;
        [z0, z1]
    }

    #[test]
    fn density_normalization_and_mean_with_jumps() {
        let p = params(1.0, cpe());
        let (t, x) = (0.5, 2.5);
        let [z0, z1] = moments_by_quadrature(&p, t, x, |tab, y| tab.density(x, y).unwrap());
        assert!((z0 - 1.0).abs() < 1e-6, "{z0}");
        let q = CirParams { y0: x, ..p.clone() };
        assert!((z1 - q.mean_at(t)).abs() < 1e-5, "{z1} vs {}", q.mean_at(t));
        let [d0, _] = moments_by_quadrature(&p, t, x, |tab, y| tab.density_with_db(x, y).unwrap().1);
        assert!(d0.abs() < 1e-6, "{d0}");
    }

    #[test]
    fn density_db_matches_finite_difference() {
        for &b in &[1.0, 0.0, -0.5] {
            let p = params(b, cpe());
            let (t, x) = (0.2, 2.0);
            for &y in &[1.6, 2.2, 2.9] {
                let h = 1e-4;
                let fd = (transition_density(&p.with_b(b + h), t, x, y).unwrap()
                    - transition_density(&p.with_b(b - h), t, x, y).unwrap())
                    / (2.0 * h);
                let v = transition_density_db(&p, t, x, y).unwrap();
                assert!((v - fd).abs() < 1e-5 * fd.abs().max(1e-2), "b={b} y={y}: {v} vs {fd}");
            }
        }
        // continuity of the b = 0 evaluation
        let (t, x, y) = (0.2, 2.0, 2.2);
        let at0 = transition_density_db(&params(0.0, cpe()), t, x, y).unwrap();
        let up = transition_density_db(&params(1e-7, cpe()), t, x, y).unwrap();
        let dn = transition_density_db(&params(-1e-7, cpe()), t, x, y).unwrap();
        assert!((at0 - 0.5 * (up + dn)).abs() < 1e-6);
    }

    #[test]
    fn chapman_kolmogorov() {
        let p = params(1.0, cpe());
        let (t, s, x, y) = (0.3, 0.2, 2.0, 2.4);
        let tab_t = CharTable::build(&p, t, frequency_bound(&p, t, x, 30.0), x, false).unwrap();
        let tab_s = CharTable::build(&p, s, frequency_bound(&p, s, 30.0, y), 0.05, false).unwrap();
        let conv = integrate(
            |z| tab_t.density(x, z).unwrap() * tab_s.density(z, y).unwrap(),
            0.05,
            12.0,
            &QuadOptions::with_tol(1e-9, 1e-9),
        )
        .unwrap()
        .value;
        let direct = transition_density(&p, t + s, x, y).unwrap();
        assert!((conv - direct).abs() < 1e-4, "{conv} vs {direct}");
    }

    #[test]
    fn stationary_laplace_examples() {
        let p = CirParams::new(2.0, 1.0, 0.5, 1.0, LevyMeasure::Zero);
        assert_eq!(stationary_laplace(&p, 0.0).unwrap(), 1.0);
        for &u in &[-0.1, -1.0, -5.0] {
            let exact = (1.0 - p.sigma * p.sigma * u / (2.0 * p.b)).powf(-2.0 * p.a / (p.sigma * p.sigma));
            assert!((stationary_laplace(&p, u).unwrap() - exact).abs() < 1e-12);
        }
        let p = params(1.0, cpe());
        let h = 1e-5;
        let slope = (stationary_laplace(&p, 0.0).unwrap() - stationary_laplace(&p, -h).unwrap()) / h;
        assert!((slope - (p.a + p.jump_mean()) / p.b).abs() < 1e-4);
        assert!(stationary_laplace(&p.with_b(0.0), -1.0).is_err());
        // the stationary law is the large-t limit of the transition law
        let far = char_fn(&p, 60.0, 2.5, c(-0.7)).unwrap().re;
        assert!((far - stationary_laplace(&p, -0.7).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn v_laplace_examples() {
        let p = CirParams::new(0.0, -0.5, 0.5, 1.5, LevyMeasure::Zero);
        assert_eq!(v_laplace(&p, 0.0).unwrap(), 1.0);
        for &u in &[-0.5, -2.0] {
            let exact = (u * p.y0 / (1.0 + p.sigma * p.sigma * u / (2.0 * p.b))).exp();
            assert!((v_laplace(&p, u).unwrap() - exact).abs() < 1e-14);
        }
        assert!(v_laplace(&p.with_b(0.5), -1.0).is_err());
        // agrees with the transform of e^{bt}Y_t at large t
        let p = params(-0.5, cpe());
        for &u in &[-0.5, -1.0, -2.0] {
            let t = 40.0;
            let direct = char_fn(&p, t, p.y0, c(u * (p.b * t).exp())).unwrap().re;
            assert!((direct - v_laplace(&p, u).unwrap()).abs() < 1e-6, "u={u}");
        }
    }

    #[test]
    fn density_grid_csv() {
        let p = params(1.0, cpe());
        let g = DensityGrid::compute(&p, 0.1, 2.5, &[2.0, 2.5, 3.0]).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("y,p,dp_db\n"));
        assert_eq!(s.lines().count(), 4);
        assert!(g.density.iter().all(|&d| d > 0.0));
    }
}
