//! Lévy measures of the driving subordinator.
//!
//! Each catalog member knows its moments, its Laplace exponent
//! `F_J(u) = ∫ (e^{uz} - 1) m(dz)` for `Re u <= 0`, and how to sample
//! increments. Custom densities fall back to quadrature.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, InverseGaussian as IgDist, Poisson};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_lr, gamma_ur, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::quad::{integrate, integrate_origin, QuadOptions, QuadValue};

/// A jump-size density on (0, ∞) supplied by the caller.
#[derive(Clone)]
pub struct CustomDensity {
    pub name: String,
    pub density: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Rate `r` such that the density decays at least like `e^{-r z}`.
    pub tail_decay: f64,
    /// Quantile function of the jump law restricted to `z > threshold`,
    /// called as `(threshold, uniform)`. Needed for sampling.
    pub tail_quantile: Option<Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
}

impl CustomDensity {
    pub fn new(name: impl Into<String>, tail_decay: f64, density: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        CustomDensity {
            name: name.into(),
            density: Arc::new(density),
            tail_decay,
            tail_quantile: None,
        }
    }

    pub fn with_tail_quantile(mut self, q: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.tail_quantile = Some(Arc::new(q));
        self
    }
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDensity")
            .field("name", &self.name)
            .field("tail_decay", &self.tail_decay)
            .field("tail_quantile", &self.tail_quantile.is_some())
            .finish()
    }
}

/// Lévy measure `m` of the subordinator.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LevyMeasure {
    /// No jumps.
    Zero,
    /// `rate` times a point mass at `location`.
    DiracAtom { rate: f64, location: f64 },
    /// `intensity * decay * e^{-decay z} dz`: Poisson arrivals at rate
    /// `intensity` with exponential sizes.
    CompoundPoissonExponential { intensity: f64, decay: f64 },
    /// `intensity * z^{-1} e^{-decay z} dz`.
    GammaProcess { intensity: f64, decay: f64 },
    /// `decay^alpha / |Γ(alpha)| * z^{alpha-1} e^{-decay z} dz`, alpha > -1, alpha != 0.
    GammaDensity { alpha: f64, decay: f64 },
    /// `delta / sqrt(2π z^3) * e^{-gamma^2 z / 2} dz`.
    InverseGaussian { delta: f64, gamma: f64 },
    #[serde(skip)]
    Custom(CustomDensity),
}

impl PartialEq for LevyMeasure {
    fn eq(&self, other: &Self) -> bool {
        use LevyMeasure::*;
        match (self, other) {
            (Zero, Zero) => true,
            (DiracAtom { rate: a, location: b }, DiracAtom { rate: c, location: d }) => a == c && b == d,
            (
                CompoundPoissonExponential { intensity: a, decay: b },
                CompoundPoissonExponential { intensity: c, decay: d },
            ) => a == c && b == d,
            (GammaProcess { intensity: a, decay: b }, GammaProcess { intensity: c, decay: d }) => a == c && b == d,
            (GammaDensity { alpha: a, decay: b }, GammaDensity { alpha: c, decay: d }) => a == c && b == d,
            (InverseGaussian { delta: a, gamma: b }, InverseGaussian { delta: c, gamma: d }) => a == c && b == d,
            (Custom(a), Custom(b)) => a.name == b.name && Arc::ptr_eq(&a.density, &b.density),
            _ => false,
        }
    }
}

/// Small/big jump decomposition at a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JumpSplit {
    pub threshold: f64,
    /// `m((threshold, ∞))`
    pub big_rate: f64,
    /// `∫_{z <= threshold} z m(dz)`
    pub small_mean: f64,
    /// `∫_{z <= threshold} z^2 m(dz)`
    pub small_var_bound: f64,
}

fn quad_opts() -> QuadOptions {
    QuadOptions::with_tol(1e-300, 1e-12)
}

/// `e^w - 1` without cancellation for small `|w|`.
pub fn cexpm1(w: Complex64) -> Complex64 {
    if w.norm() > 0.5 {
        return w.exp() - 1.0;
    }
    let half_sin = (0.5 * w.im).sin();
    let re = w.re.exp_m1() * w.im.cos() - 2.0 * half_sin * half_sin;
    Complex64::new(re, w.re.exp() * w.im.sin())
}

/// `Log(1 + w)` without cancellation for small `|w|`.
pub fn clog1p(w: Complex64) -> Complex64 {
    if w.norm() > 0.5 {
        return (w + 1.0).ln();
    }
    let re = 0.5 * (2.0 * w.re + w.norm_sqr()).ln_1p();
    Complex64::new(re, w.im.atan2(1.0 + w.re))
}

fn sign_gamma(alpha: f64) -> f64 {
    if alpha > 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl LevyMeasure {
    pub fn validate(&self) -> Result<()> {
        use LevyMeasure::*;
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match self {
            Zero => Ok(()),
            DiracAtom { rate, location } => {
                if !(*rate >= 0.0 && rate.is_finite()) {
                    return Err(invalid(format!("dirac rate must be >= 0, got {rate}")));
                }
                pos("dirac location", *location)
            }
            CompoundPoissonExponential { intensity, decay } | GammaProcess { intensity, decay } => {
                pos("intensity", *intensity)?;
                pos("decay", *decay)
            }
            GammaDensity { alpha, decay } => {
                if !(*alpha > -1.0 && alpha.is_finite()) {
                    return Err(invalid(format!("gamma-density alpha must exceed -1, got {alpha}")));
                }
                if *alpha == 0.0 {
                    return Err(invalid("gamma-density alpha = 0 gives the zero measure; use zero or gamma-process"));
                }
                pos("decay", *decay)
            }
            InverseGaussian { delta, gamma } => {
                pos("delta", *delta)?;
                pos("gamma", *gamma)
            }
            Custom(c) => {
                pos("tail decay", c.tail_decay)?;
                let m1 = self.moment_by_quadrature(1.0).map_err(|e| Error::InfiniteFirstMoment(e.to_string()))?;
                if !m1.is_finite() {
                    return Err(Error::InfiniteFirstMoment(c.name.clone()));
                }
                Ok(())
            }
        }
    }

    /// Whether the total mass is finite.
    pub fn is_finite_activity(&self) -> bool {
        use LevyMeasure::*;
        match self {
            Zero | DiracAtom { .. } | CompoundPoissonExponential { .. } => true,
            GammaDensity { alpha, .. } => *alpha > 0.0,
            GammaProcess { .. } | InverseGaussian { .. } | Custom(_) => false,
        }
    }

    /// Total mass `m((0, ∞))`; infinite for infinite-activity measures.
    pub fn total_mass(&self) -> f64 {
        use LevyMeasure::*;
        match self {
            Zero => 0.0,
            DiracAtom { rate, .. } => *rate,
            CompoundPoissonExponential { intensity, .. } => *intensity,
            GammaDensity { alpha, .. } if *alpha > 0.0 => 1.0,
            _ => f64::INFINITY,
        }
    }

    /// Density of the absolutely continuous part at `z > 0`; `None` for atoms.
    pub fn density(&self, z: f64) -> Option<f64> {
        use LevyMeasure::*;
        if z <= 0.0 {
            return Some(0.0);
        }
        Some(match self {
            Zero => 0.0,
            DiracAtom { .. } => return None,
            CompoundPoissonExponential { intensity, decay } => intensity * decay * (-decay * z).exp(),
            GammaProcess { intensity, decay } => intensity * (-decay * z).exp() / z,
            GammaDensity { alpha, decay } => {
                let log_k = alpha * decay.ln() - ln_gamma_abs(*alpha);
                (log_k + (alpha - 1.0) * z.ln() - decay * z).exp()
            }
            InverseGaussian { delta, gamma } => {
                delta / (2.0 * std::f64::consts::PI * z * z * z).sqrt() * (-0.5 * gamma * gamma * z).exp()
            }
            Custom(c) => (c.density)(z),
        })
    }

    fn tail_rate(&self) -> f64 {
        use LevyMeasure::*;
        match self {
            Zero | DiracAtom { .. } => 1.0,
            CompoundPoissonExponential { decay, .. } | GammaProcess { decay, .. } | GammaDensity { decay, .. } => *decay,
            InverseGaussian { gamma, .. } => 0.5 * gamma * gamma,
            Custom(c) => c.tail_decay,
        }
    }

    /// `∫ z m(dz)`.
    pub fn first_moment(&self) -> Result<f64> {
        self.moment(1.0)
    }

    /// `∫ z^p m(dz)` for `p > 1`.
    pub fn pth_moment(&self, p: f64) -> Result<f64> {
        if !(p > 1.0) {
            return Err(invalid(format!("moment order must exceed 1, got {p}")));
        }
        self.moment(p)
    }

    /// `∫ z^p m(dz)` for `p >= 1`, closed form for the catalog.
    pub fn moment(&self, p: f64) -> Result<f64> {
        use LevyMeasure::*;
        if !(p >= 1.0) {
            return Err(invalid(format!("moment order must be at least 1, got {p}")));
        }
        Ok(match self {
            Zero => 0.0,
            DiracAtom { rate, location } => rate * location.powf(p),
            CompoundPoissonExponential { intensity, decay } => intensity * (ln_gamma(p + 1.0) - p * decay.ln()).exp(),
            GammaProcess { intensity, decay } => intensity * (ln_gamma(p) - p * decay.ln()).exp(),
            GammaDensity { alpha, decay } => {
                // K Γ(α+p) / λ^{α+p} with K = λ^α / |Γ(α)|
                (ln_gamma(alpha + p) - ln_gamma_abs(*alpha) - p * decay.ln()).exp()
            }
            InverseGaussian { delta, gamma } => {
                let c = 0.5 * gamma * gamma;
                delta / (2.0 * std::f64::consts::PI).sqrt() * (ln_gamma(p - 0.5) - (p - 0.5) * c.ln()).exp()
            }
            Custom(_) => match self.moment_by_quadrature(p) {
                Ok(v) if v.is_finite() => v,
                _ if p == 1.0 => return Err(Error::InfiniteFirstMoment(format!("{self:?}"))),
                _ => {
                    return Err(Error::InfiniteMoment {
                        order: p,
                        detail: format!("{self:?}"),
                    })
                }
            },
        })
    }

    /// `∫ z^p m(dz)` by adaptive quadrature on `(0, υ]` and doubling blocks
    /// beyond, stopping once the exponential tail bound is negligible.
    pub fn moment_by_quadrature(&self, p: f64) -> Result<f64> {
        if let LevyMeasure::DiracAtom { rate, location } = self {
            return Ok(rate * location.powf(p));
        }
        self.integrate_against(|z| z.powf(p), 0.0, f64::INFINITY)
    }

    /// `∫_{lower}^{upper} g(z) m(dz)` for a measure with a density.
    pub(crate) fn integrate_against<T: QuadValue>(&self, g: impl Fn(f64) -> T, lower: f64, upper: f64) -> Result<T> {
        let opts = quad_opts();
        let dens = |z: f64| self.density(z).ok_or_else(|| invalid("measure has no density"));
        dens(1.0)?;
        let f = |z: f64| g(z) * self.density(z).unwrap_or(0.0);
        let rate = self.tail_rate();
        let scale = (1.0 / rate).min(upper);
        let mut total = T::zero();
        let mut start = lower;
        if lower == 0.0 {
            total = integrate_origin(&f, scale, &opts)?.value;
            start = scale;
        }
        if upper.is_finite() {
            return Ok(total + integrate(&f, start, upper, &opts)?.value);
        }
        let mut width = scale.max(start);
        for _ in 0..200 {
            let end = start + width;
            let block = integrate(&f, start, end, &opts)?.value;
            total = total + block;
            start = end;
            width *= 2.0;
            // tail beyond `start` is bounded by f(start)/(rate/2) once the
            // polynomial factor is dominated, which needs start > 4p/rate
            let bound = f(start).magnitude() / (0.5 * rate);
            if start * rate > 40.0 && bound <= 1e-15 * total.magnitude().max(1e-300) {
                return Ok(total);
            }
            if start * rate > 800.0 {
                break;
            }
        }
        Err(Error::Quadrature {
            lower,
            upper: start,
            error: f64::NAN,
            panels: 200,
        })
    }

    /// Small/big jump decomposition at `threshold`.
    pub fn split(&self, threshold: f64) -> Result<JumpSplit> {
        use LevyMeasure::*;
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(invalid(format!("split threshold must be positive, got {threshold}")));
        }
        let u = threshold;
        let (big_rate, small_mean, small_var_bound) = match self {
            Zero => (0.0, 0.0, 0.0),
            DiracAtom { rate, location } => {
                if *location > u {
                    (*rate, 0.0, 0.0)
                } else {
                    (0.0, rate * location, rate * location * location)
                }
            }
            CompoundPoissonExponential { intensity, decay } => {
                let x = decay * u;
                (
                    intensity * (-x).exp(),
                    intensity * gamma_lr(2.0, x) / decay,
                    2.0 * intensity * gamma_lr(3.0, x) / (decay * decay),
                )
            }
            GammaProcess { intensity, decay } => {
                let x = decay * u;
                let big = self.integrate_against(|_| 1.0, u, f64::INFINITY)?;
                (
                    big,
                    intensity * (-x).exp_m1().abs() / decay,
                    intensity * gamma_lr(2.0, x) / (decay * decay),
                )
            }
            GammaDensity { alpha, decay } => {
                let x = decay * u;
                let big = if *alpha > 0.0 {
                    gamma_ur(*alpha, x)
                } else {
                    self.integrate_against(|_| 1.0, u, f64::INFINITY)?
                };
                let a = alpha.abs();
                (
                    big,
                    a / decay * gamma_lr(alpha + 1.0, x),
                    a * (alpha + 1.0) / (decay * decay) * gamma_lr(alpha + 2.0, x),
                )
            }
            InverseGaussian { delta, gamma: g } => {
                let c = 0.5 * g * g;
                let x = c * u;
                let pre = delta / (2.0 * std::f64::consts::PI).sqrt();
                // Γ(-1/2, x) = 2 (e^{-x}/sqrt(x) - sqrt(π) erfc(sqrt(x)))
                let upper_gamma = 2.0
                    * ((-x).exp() / x.sqrt()
                        - std::f64::consts::PI.sqrt() * statrs::function::erf::erfc(x.sqrt()));
                (
                    pre * c.sqrt() * upper_gamma,
                    delta / g * gamma_lr(0.5, x),
                    pre * gamma(1.5) * c.powf(-1.5) * gamma_lr(1.5, x),
                )
            }
            Custom(_) => (
                self.integrate_against(|_| 1.0, u, f64::INFINITY)?,
                self.integrate_against(|z| z, 0.0, u)?,
                self.integrate_against(|z| z * z, 0.0, u)?,
            ),
        };
        Ok(JumpSplit {
            threshold,
            big_rate,
            small_mean,
            small_var_bound,
        })
    }

    /// Jump part of the immigration mechanism, `∫ (e^{uz} - 1) m(dz)`, for `Re u <= 0`.
    pub fn laplace_exponent(&self, u: Complex64) -> Complex64 {
        use LevyMeasure::*;
        match self {
            Zero => Complex64::new(0.0, 0.0),
            DiracAtom { rate, location } => cexpm1(u * *location) * *rate,
            CompoundPoissonExponential { intensity, decay } => u * *intensity / (*decay - u),
            GammaProcess { intensity, decay } => -clog1p(-u / *decay) * *intensity,
            GammaDensity { alpha, decay } => cexpm1(-clog1p(-u / *decay) * *alpha) * sign_gamma(*alpha),
            InverseGaussian { delta, gamma } => {
                let root = (Complex64::new(gamma * gamma, 0.0) - u * 2.0).sqrt();
                // δ(γ - √(γ²-2u)) = 2δu / (γ + √(γ²-2u)), cancellation free
                u * (2.0 * delta) / (root + *gamma)
            }
            Custom(_) => self
                .integrate_against(|z| cexpm1(u * z), 0.0, f64::INFINITY)
                .unwrap_or(Complex64::new(f64::NAN, f64::NAN)),
        }
    }

    /// `F_J(u) / u`, continuous at `u = 0` where it equals the first moment.
    pub fn laplace_exponent_over_u(&self, u: Complex64) -> Complex64 {
        use LevyMeasure::*;
        let tiny = u.norm() < 1e-300;
        match self {
            Zero => Complex64::new(0.0, 0.0),
            CompoundPoissonExponential { intensity, decay } => *intensity / (*decay - u),
            InverseGaussian { delta, gamma } => {
                let root = (Complex64::new(gamma * gamma, 0.0) - u * 2.0).sqrt();
                (2.0 * delta) / (root + *gamma)
            }
            _ if tiny => Complex64::new(self.first_moment().unwrap_or(f64::NAN), 0.0),
            DiracAtom { rate, location } => cexpm1(u * *location) * *rate / u,
            GammaProcess { intensity, decay } => -clog1p(-u / *decay) * *intensity / u,
            GammaDensity { alpha, decay } => cexpm1(-clog1p(-u / *decay) * *alpha) * sign_gamma(*alpha) / u,
            Custom(_) => {
                // two-term Taylor expansion where F_J(u)/u would cancel
                if u.norm() * self.tail_rate().recip().max(1.0) < 1e-5 {
                    let m1 = self.moment(1.0).unwrap_or(f64::NAN);
                    let m2 = self.moment(2.0).unwrap_or(f64::NAN);
                    Complex64::new(m1, 0.0) + u * (0.5 * m2)
                } else {
                    self.laplace_exponent(u) / u
                }
            }
        }
    }

    /// `F_J'(u) = ∫ z e^{uz} m(dz)`.
    pub fn laplace_exponent_deriv(&self, u: Complex64) -> Complex64 {
        use LevyMeasure::*;
        match self {
            Zero => Complex64::new(0.0, 0.0),
            DiracAtom { rate, location } => (u * *location).exp() * (rate * location),
            CompoundPoissonExponential { intensity, decay } => {
                let d = *decay - u;
                intensity * decay / (d * d)
            }
            GammaProcess { intensity, decay } => *intensity / (*decay - u),
            GammaDensity { alpha, decay } => {
                let base = Complex64::new(1.0, 0.0) - u / *decay;
                base.powf(-alpha - 1.0) * (alpha.abs() / decay)
            }
            InverseGaussian { delta, gamma } => *delta / (Complex64::new(gamma * gamma, 0.0) - u * 2.0).sqrt(),
            Custom(_) => self
                .integrate_against(|z| (u * z).exp() * z, 0.0, f64::INFINITY)
                .unwrap_or(Complex64::new(f64::NAN, f64::NAN)),
        }
    }

    /// Build an increment sampler for steps of length `dt`. `threshold` is
    /// the split level for measures without an exact sampler (default `sqrt(dt)`).
    pub fn sampler(&self, dt: f64, threshold: Option<f64>) -> Result<JumpSampler> {
        use LevyMeasure::*;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        let threshold = threshold.unwrap_or(dt.sqrt());
        let poisson = |rate: f64, size: SizeLaw| -> Result<SamplerKind> {
            let mean = rate * dt;
            Ok(if mean > 0.0 {
                SamplerKind::Poisson {
                    count: Poisson::new(mean).map_err(|e| invalid(e.to_string()))?,
                    size,
                }
            } else {
                SamplerKind::Zero
            })
        };
        let kind = match self {
            Zero => SamplerKind::Zero,
            DiracAtom { rate, location } => poisson(*rate, SizeLaw::Fixed(*location))?,
            CompoundPoissonExponential { intensity, decay } => {
                poisson(*intensity, SizeLaw::Exponential(Exp::new(*decay).map_err(|e| invalid(e.to_string()))?))?
            }
            GammaDensity { alpha, decay } if *alpha > 0.0 => poisson(
                1.0,
                SizeLaw::Gamma(Gamma::new(*alpha, 1.0 / decay).map_err(|e| invalid(e.to_string()))?),
            )?,
            GammaProcess { intensity, decay } => {
                SamplerKind::GammaIncrement(Gamma::new(intensity * dt, 1.0 / decay).map_err(|e| invalid(e.to_string()))?)
            }
            InverseGaussian { delta, gamma } => {
                let mean = delta * dt / gamma;
                let shape = (delta * dt).powi(2);
                SamplerKind::IgIncrement(IgDist::new(mean, shape).map_err(|e| invalid(e.to_string()))?)
            }
            GammaDensity { alpha, decay } => {
                let split = self.split(threshold)?;
                let size = SizeLaw::GammaTail {
                    alpha: *alpha,
                    threshold,
                    proposal: Exp::new(*decay).map_err(|e| invalid(e.to_string()))?,
                };
                self.split_sampler(dt, split, size)?
            }
            Custom(c) => {
                let q = c.tail_quantile.clone().ok_or_else(|| {
                    Error::NoSampler(format!("custom density '{}' has no tail quantile function", c.name))
                })?;
                let split = self.split(threshold)?;
                self.split_sampler(dt, split, SizeLaw::CustomTail { quantile: q, threshold })?
            }
        };
        Ok(JumpSampler { dt, kind })
    }

    fn split_sampler(&self, dt: f64, split: JumpSplit, size: SizeLaw) -> Result<SamplerKind> {
        let mean = split.big_rate * dt;
        Ok(SamplerKind::Split {
            count: if mean > 0.0 {
                Some(Poisson::new(mean).map_err(|e| invalid(e.to_string()))?)
            } else {
                None
            },
            size,
            drift: dt * split.small_mean,
        })
    }

    /// `count` i.i.d. draws of the increment over `dt`.
    pub fn sample_increments<R: Rng + ?Sized>(
        &self,
        dt: f64,
        count: usize,
        threshold: Option<f64>,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if count == 0 {
            return Err(invalid("increment count must be at least 1"));
        }
        let sampler = self.sampler(dt, threshold)?;
        Ok((0..count).map(|_| sampler.increment(rng)).collect())
    }
}

fn ln_gamma_abs(x: f64) -> f64 {
    if x > 0.0 {
        ln_gamma(x)
    } else {
        // |Γ(x)| = Γ(x+1)/|x| for x in (-1, 0)
        ln_gamma(x + 1.0) - x.abs().ln()
    }
}

enum SizeLaw {
    Fixed(f64),
    Exponential(Exp<f64>),
    Gamma(Gamma<f64>),
    /// `z^{alpha-1} e^{-decay z}` restricted to `z > threshold`, by rejection
    /// from `threshold + Exp(decay)`.
    GammaTail {
        alpha: f64,
        threshold: f64,
        proposal: Exp<f64>,
    },
    CustomTail {
        quantile: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
        threshold: f64,
    },
}

impl SizeLaw {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SizeLaw::Fixed(z) => *z,
            SizeLaw::Exponential(d) => d.sample(rng),
            SizeLaw::Gamma(d) => d.sample(rng),
            SizeLaw::GammaTail {
                alpha,
                threshold,
                proposal,
            } => loop {
                let z = threshold + proposal.sample(rng);
                let accept = (z / threshold).powf(alpha - 1.0);
                if rng.random::<f64>() < accept {
                    break z;
                }
            },
            SizeLaw::CustomTail { quantile, threshold } => quantile(*threshold, rng.random::<f64>()),
        }
    }
}

enum SamplerKind {
    Zero,
    Poisson { count: Poisson<f64>, size: SizeLaw },
    GammaIncrement(Gamma<f64>),
    IgIncrement(IgDist<f64>),
    Split {
        count: Option<Poisson<f64>>,
        size: SizeLaw,
        drift: f64,
    },
}

/// Jumps falling in one step: marks at offsets in `[0, dt]` plus an
/// increment applied at the step end. The end increment carries the exact
/// increment of infinite-activity samplers and the small-jump compensator
/// of split samplers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepJumps {
    pub marks: Vec<(f64, f64)>,
    pub terminal: f64,
}

impl StepJumps {
    pub fn total(&self) -> f64 {
        self.marks.iter().map(|m| m.1).sum::<f64>() + self.terminal
    }
}

/// Increment sampler for a fixed step length.
pub struct JumpSampler {
    dt: f64,
    kind: SamplerKind,
}

impl JumpSampler {
    /// Whether the sampler places individual jumps at exact times.
    pub fn has_exact_times(&self) -> bool {
        matches!(self.kind, SamplerKind::Poisson { .. } | SamplerKind::Zero)
    }

    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R) -> StepJumps {
        match &self.kind {
            SamplerKind::Zero => StepJumps::default(),
            SamplerKind::Poisson { count, size } => {
                let n = count.sample(rng) as usize;
                let mut marks: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>() * self.dt, size.draw(rng))).collect();
                marks.sort_by(|a, b| a.0.total_cmp(&b.0));
                StepJumps { marks, terminal: 0.0 }
            }
            SamplerKind::GammaIncrement(g) => StepJumps {
                marks: Vec::new(),
                terminal: g.sample(rng),
            },
            SamplerKind::IgIncrement(ig) => StepJumps {
                marks: Vec::new(),
                terminal: ig.sample(rng),
            },
            SamplerKind::Split { count, size, drift } => {
                let n = count.as_ref().map_or(0, |c| c.sample(rng) as usize);
                let mut marks: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>() * self.dt, size.draw(rng))).collect();
                marks.sort_by(|a, b| a.0.total_cmp(&b.0));
                StepJumps { marks, terminal: *drift }
            }
        }
    }

    pub fn increment<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.step(rng).total()
    }
}
