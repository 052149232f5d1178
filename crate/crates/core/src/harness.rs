//! Monte Carlo experiments for the local asymptotic behaviour of the
//! likelihood ratio in `b`, their limit laws and supporting checks.
//!
//! Every replication draws from streams derived from `(seed, name, index)`
//! and results are collected in replication order, so reports do not depend
//! on the thread count.

use std::collections::BTreeMap;
use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine::{diffusion_density, transition_density, v_laplace, CharTable, frequency_bound};
use crate::error::{invalid, Result};
use crate::inference::{loglik_ratio_continuous, loglik_ratio_discrete, score_info, DiscreteObs};
use crate::levy::LevyMeasure;
use crate::quad::{integrate, QuadOptions};
use crate::rng;
use crate::sim::{simulate_path, CirParams, Criticality, Scheme};
use crate::stats::{self, KsResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Observation {
    Continuous,
    Discrete,
}

/// Gate thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Absolute tolerance on the mean; `None` means `3 sqrt(u²I/M)`.
    pub mean_abs: Option<f64>,
    pub var_rel: f64,
    pub ks_p: f64,
    /// Unit-mean checks pass within this many standard errors.
    pub unit_mean_se: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            mean_abs: None,
            var_rel: 0.15,
            ks_p: 0.01,
            unit_mean_se: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub params: CirParams,
    pub observation: Observation,
    pub u: f64,
    /// Continuous horizon `T`.
    pub horizon: f64,
    /// Simulation step for continuous observation.
    pub path_step: f64,
    /// Number of discrete observations `n`.
    pub obs_count: usize,
    /// Discrete observation step `Δ`.
    pub obs_step: f64,
    pub replications: usize,
    /// Draws of the limit law for two-sample comparisons.
    pub limit_replications: usize,
    pub seed: u64,
    /// Run discrete experiments even when `a/σ²` is below the bound of
    /// `sim::discrete_ratio_bound`.
    pub allow_outside_a3: bool,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            params: CirParams::new(
                2.0,
                1.0,
                0.5,
                2.5,
                LevyMeasure::CompoundPoissonExponential { intensity: 1.0, decay: 2.0 },
            ),
            observation: Observation::Continuous,
            u: 1.0,
            horizon: 100.0,
            path_step: 0.01,
            obs_count: 2000,
            obs_step: 0.05,
            replications: 500,
            limit_replications: 10_000,
            seed: 0,
            allow_outside_a3: false,
            tolerances: Tolerances::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn regime(&self) -> Criticality {
        self.params.classify()
    }

    /// Observation horizon `T` or `nΔ`.
    pub fn span(&self) -> f64 {
        match self.observation {
            Observation::Continuous => self.horizon,
            Observation::Discrete => self.obs_count as f64 * self.obs_step,
        }
    }

    /// Rate `φ` multiplying the local parameter.
    pub fn rate(&self) -> f64 {
        let t = self.span();
        match self.regime() {
            Criticality::Subcritical => 1.0 / t.sqrt(),
            Criticality::Critical => 1.0 / t,
            Criticality::Supercritical => (0.5 * self.params.b * t).exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !self.u.is_finite() {
            return Err(invalid(format!("u must be finite, got {}", self.u)));
        }
        if self.replications < 2 {
            return Err(invalid("experiments need at least two replications"));
        }
        match self.observation {
            Observation::Continuous => {
                if !(self.horizon > 0.0 && self.path_step > 0.0 && self.path_step <= self.horizon) {
                    return Err(invalid(format!(
                        "need 0 < path_step <= horizon, got {} and {}",
                        self.path_step, self.horizon
                    )));
                }
            }
            Observation::Discrete => {
                if self.obs_count == 0 || !(self.obs_step > 0.0) {
                    return Err(invalid("discrete observation needs obs_count >= 1 and obs_step > 0"));
                }
                if !self.allow_outside_a3 {
                    self.params.check_discrete_condition()?;
                }
            }
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.horizon / self.path_step).round().max(1.0) as usize
    }
}

/// Weak limit of `(U, I)` in each regime.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LimitLaw {
    /// `U ~ N(0, I)` with deterministic `I = (a + ∫z m)/(σ² b)`.
    GaussianLan { info: f64, z: Vec<f64> },
    /// `U = (a + ∫z m - 𝒴_1)/σ²`, `I = ∫_0^1 𝒴 ds / σ²` for the critical
    /// diffusion `𝒴` started at 0 with drift `a + ∫z m`.
    CriticalPair { score: Vec<f64>, info: Vec<f64> },
    /// `U = sqrt(I) Z`, `I = -V/(σ² b)` with `V = lim e^{bt} Y_t`.
    MixedNormal { v: Vec<f64>, z: Vec<f64>, info: Vec<f64> },
}

impl LimitLaw {
    /// Draws of `uU - u²I/2`.
    pub fn quadratic(&self, u: f64) -> Vec<f64> {
        match self {
            LimitLaw::GaussianLan { info, z } => z.iter().map(|z| u * info.sqrt() * z - 0.5 * u * u * info).collect(),
            LimitLaw::CriticalPair { score, info } => {
                score.iter().zip(info).map(|(s, i)| u * s - 0.5 * u * u * i).collect()
            }
            LimitLaw::MixedNormal { z, info, .. } => {
                z.iter().zip(info).map(|(z, i)| u * i.sqrt() * z - 0.5 * u * u * i).collect()
            }
        }
    }

    pub fn info(&self) -> Vec<f64> {
        match self {
            LimitLaw::GaussianLan { info, z } => vec![*info; z.len()],
            LimitLaw::CriticalPair { info, .. } | LimitLaw::MixedNormal { info, .. } => info.clone(),
        }
    }
}

/// Steps for the critical limit path on `[0, 1]`.
pub const CRITICAL_LIMIT_STEPS: usize = 1000;
/// Simulation step for the long-horizon draw of `V`.
const V_PATH_STEP: f64 = 0.1;

/// Horizon for `V = e^{bT} Y_T`: at least 30 and with `e^{bT} <= 1e-4`.
pub fn v_horizon(b: f64) -> f64 {
    (-(1e-4f64).ln() / b.abs()).max(30.0)
}

/// `M` draws of `V` from `p.y0`.
pub fn sample_v(p: &CirParams, m: usize, seed: u64) -> Result<Vec<f64>> {
    if !(p.b < 0.0) {
        return Err(invalid(format!("V exists only for b < 0, got {}", p.b)));
    }
    let t = v_horizon(p.b);
    let steps = (t / V_PATH_STEP).ceil() as usize;
    let scale = (p.b * t).exp();
    (0..m)
        .into_par_iter()
        .map(|i| {
            let path = simulate_path(p, t, steps, Scheme::ExactBetweenJumps, rng::derive_seed(seed, "limit-v", i as u64))?;
            Ok(scale * path.y_end())
        })
        .collect()
}

fn normals(seed: u64, component: &str, m: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, component, 0);
    (0..m).map(|_| StandardNormal.sample(&mut r)).collect()
}

/// Sample the limit law for the regime of `p` (with `b = b_0`).
pub fn sample_limit_law(p: &CirParams, m: usize, seed: u64) -> Result<LimitLaw> {
    p.validate()?;
    if m < 1000 {
        return Err(invalid(format!("limit law needs at least 1000 draws, got {m}")));
    }
    let s2 = p.sigma * p.sigma;
    let drift = p.a + p.levy.first_moment()?;
    match p.classify() {
        Criticality::Subcritical => Ok(LimitLaw::GaussianLan {
            info: drift / (s2 * p.b),
            z: normals(seed, "limit-z", m),
        }),
        Criticality::Critical => {
            let q = CirParams::new(drift, 0.0, p.sigma, 0.0, LevyMeasure::Zero);
            let pairs: Result<Vec<(f64, f64)>> = (0..m)
                .into_par_iter()
                .map(|i| {
                    let path = simulate_path(
                        &q,
                        1.0,
                        CRITICAL_LIMIT_STEPS,
                        Scheme::ExactBetweenJumps,
                        rng::derive_seed(seed, "limit-critical", i as u64),
                    )?;
                    Ok(((drift - path.y_end()) / s2, path.integral() / s2))
                })
                .collect();
            let pairs = pairs?;
            Ok(LimitLaw::CriticalPair {
                score: pairs.iter().map(|x| x.0).collect(),
                info: pairs.iter().map(|x| x.1).collect(),
            })
        }
        Criticality::Supercritical => {
            let v = sample_v(p, m, seed)?;
            let info = v.iter().map(|v| -v / (s2 * p.b)).collect();
            Ok(LimitLaw::MixedNormal {
                v,
                z: normals(seed, "limit-z", m),
                info,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Gate {
    pub fn below(name: &str, value: f64, threshold: f64) -> Gate {
        Gate {
            name: name.into(),
            value,
            threshold,
            pass: value < threshold,
        }
    }

    pub fn above(name: &str, value: f64, threshold: f64) -> Gate {
        Gate {
            name: name.into(),
            value,
            threshold,
            pass: value > threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnitMean {
    pub mean: f64,
    pub se: f64,
    pub median: f64,
    pub p99: f64,
}

impl UnitMean {
    fn of_log(xs: &[f64]) -> UnitMean {
        let e: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        UnitMean {
            mean: stats::mean(&e),
            se: stats::std_error(&e),
            median: stats::quantile(&e, 0.5),
            p99: stats::quantile(&e, 0.99),
        }
    }

    fn gate(&self, se_mult: f64) -> Gate {
        let dev = (self.mean - 1.0).abs();
        Gate {
            name: "unit_mean".into(),
            value: dev,
            threshold: se_mult * self.se,
            pass: dev <= se_mult * self.se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub schema_version: u32,
    pub experiment: String,
    pub seed: u64,
    pub replications: usize,
    pub u: Option<f64>,
    pub rate: Option<f64>,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub target_mean: Option<f64>,
    pub target_variance: Option<f64>,
    pub ks: Option<KsResult>,
    pub unit_mean: Option<UnitMean>,
    pub extra: BTreeMap<String, f64>,
    pub gates: Vec<Gate>,
    pub pass: bool,
}

impl TestReport {
    fn new(experiment: &str, seed: u64, replications: usize) -> TestReport {
        TestReport {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.into(),
            seed,
            replications,
            u: None,
            rate: None,
            mean: None,
            variance: None,
            target_mean: None,
            target_variance: None,
            ks: None,
            unit_mean: None,
            extra: BTreeMap::new(),
            gates: Vec::new(),
            pass: false,
        }
    }

    fn finish(mut self) -> TestReport {
        self.pass = self.gates.iter().all(|g| g.pass);
        self
    }

    pub fn gate(&self, name: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| invalid(e.to_string()))
    }
}

/// Report plus the samples behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: TestReport,
    pub samples: Vec<f64>,
    pub limit_draws: Vec<f64>,
}

impl ExperimentOutput {
    /// CSV with columns `index,sample,limit`; either column may be empty
    /// where one sample is longer than the other.
    pub fn write_samples_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["index", "sample", "limit"])?;
        let n = self.samples.len().max(self.limit_draws.len());
        for i in 0..n {
            let cell = |v: &[f64]| v.get(i).map_or(String::new(), |x| format!("{x}"));
            out.write_record(&[format!("{i}"), cell(&self.samples), cell(&self.limit_draws)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Log-likelihood ratios `log dP^{b_0 + φu}/dP^{b_0}` of `M` replications,
/// and for continuous observation the scaled scores.
pub fn log_ratios(cfg: &ExperimentConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate()?;
    let p = &cfg.params;
    let rate = cfg.rate();
    let u = cfg.u;
    let rows: Result<Vec<(f64, f64)>> = (0..cfg.replications)
        .into_par_iter()
        .map(|i| {
            let seed = rng::derive_seed(cfg.seed, "replication", i as u64);
            match cfg.observation {
                Observation::Continuous => {
                    let path = simulate_path(p, cfg.horizon, cfg.steps(), Scheme::ExactBetweenJumps, seed)?;
                    let si = score_info(&path, p, rate);
                    let lr = if u == 0.0 { 0.0 } else { loglik_ratio_continuous(&path, p, p.b + rate * u) };
                    Ok((lr, si.score))
                }
                Observation::Discrete => {
                    let path = simulate_path(p, cfg.span(), cfg.obs_count, Scheme::ExactBetweenJumps, seed)?;
                    let obs = DiscreteObs::new(cfg.obs_step, path.states)?;
                    let lr = loglik_ratio_discrete(&obs, p, u, rate)
                        .map_err(|e| e.tag("harness", format!("replication {i}")))?;
                    Ok((lr, f64::NAN))
                }
            }
        })
        .collect();
    let rows = rows?;
    Ok((rows.iter().map(|r| r.0).collect(), rows.iter().map(|r| r.1).collect()))
}

fn name(cfg: &ExperimentConfig, kind: &str) -> String {
    let obs = match cfg.observation {
        Observation::Continuous => "continuous",
        Observation::Discrete => "discrete",
    };
    format!("{obs}-{kind}")
}

fn base_report(cfg: &ExperimentConfig, kind: &str, lr: &[f64]) -> TestReport {
    let mut r = TestReport::new(&name(cfg, kind), cfg.seed, cfg.replications);
    r.u = Some(cfg.u);
    r.rate = Some(cfg.rate());
    r.mean = Some(stats::mean(lr));
    r.variance = Some(stats::variance(lr));
    r
}

fn zero_gate(lr: &[f64]) -> Gate {
    let worst = lr.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Gate {
        name: "all_zero".into(),
        value: worst,
        threshold: 0.0,
        pass: worst == 0.0,
    }
}

/// Subcritical LAN: log-LR against `N(-u²I/2, u²I)`.
pub fn run_lan(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if cfg.regime() != Criticality::Subcritical {
        return Err(invalid(format!("LAN experiment needs b > 0, got {}", cfg.params.b)));
    }
    let (lr, _) = log_ratios(cfg)?;
    let p = &cfg.params;
    let info = (p.a + p.levy.first_moment()?) / (p.sigma * p.sigma * p.b);
    let (u, m) = (cfg.u, cfg.replications as f64);
    let (tm, tv) = (-0.5 * u * u * info, u * u * info);
    let mut r = base_report(cfg, "lan", &lr);
    r.target_mean = Some(tm);
    r.target_variance = Some(tv);
    r.extra.insert("info".into(), info);
    if u == 0.0 {
        r.gates.push(zero_gate(&lr));
    } else {
        let tol = cfg.tolerances;
        let mean_tol = tol.mean_abs.unwrap_or(3.0 * (tv / m).sqrt());
        let (mean, var) = (r.mean.unwrap(), r.variance.unwrap());
        r.gates.push(Gate::below("mean", (mean - tm).abs(), mean_tol));
        r.gates.push(Gate::below("variance", (var / tv - 1.0).abs(), tol.var_rel));
        let ks = stats::ks_one_sample(&lr, |x| stats::normal_cdf(x, tm, tv.sqrt()));
        r.ks = Some(ks);
        r.gates.push(Gate::above("ks_p", ks.p_value, tol.ks_p));
        r.extra.insert("var_over_minus_two_mean".into(), var / (-2.0 * mean));
    }
    let limit = LimitLaw::GaussianLan {
        info,
        z: normals(cfg.seed, "limit-z", cfg.replications),
    };
    Ok(ExperimentOutput {
        report: r.finish(),
        limit_draws: limit.quadratic(u),
        samples: lr,
    })
}

/// Critical LAQ: two-sample KS against `uU(0) - u²I(0)/2` and the unit
/// mean of the likelihood ratio.
pub fn run_laq(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if cfg.regime() != Criticality::Critical {
        return Err(invalid(format!("LAQ experiment needs b = 0, got {}", cfg.params.b)));
    }
    let (lr, _) = log_ratios(cfg)?;
    let limit = sample_limit_law(&cfg.params, cfg.limit_replications, rng::derive_seed(cfg.seed, "limit", 0))?;
    let draws = limit.quadratic(cfg.u);
    let mut r = base_report(cfg, "laq", &lr);
    r.target_mean = Some(stats::mean(&draws));
    r.target_variance = Some(stats::variance(&draws));
    let um = UnitMean::of_log(&lr);
    r.unit_mean = Some(um);
    if cfg.u == 0.0 {
        r.gates.push(zero_gate(&lr));
    } else {
        let ks = stats::ks_two_sample(&lr, &draws);
        r.ks = Some(ks);
        r.gates.push(Gate::above("ks_p", ks.p_value, cfg.tolerances.ks_p));
    }
    r.gates.push(um.gate(cfg.tolerances.unit_mean_se));
    Ok(ExperimentOutput {
        report: r.finish(),
        samples: lr,
        limit_draws: draws,
    })
}

/// Supercritical LAMN: two-sample KS against the mixed-normal limit, the
/// heavy-tail signature of the score and a non-degeneracy check of the
/// spread at the chosen rate.
pub fn run_lamn(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    if cfg.regime() != Criticality::Supercritical {
        return Err(invalid(format!("LAMN experiment needs b < 0, got {}", cfg.params.b)));
    }
    let (lr, scores) = log_ratios(cfg)?;
    let limit = sample_limit_law(&cfg.params, cfg.limit_replications, rng::derive_seed(cfg.seed, "limit", 0))?;
    let draws = limit.quadratic(cfg.u);
    let info = limit.info();
    let mut r = base_report(cfg, "lamn", &lr);
    r.target_mean = Some(stats::mean(&draws));
    r.target_variance = Some(stats::variance(&draws));
    let median_info = stats::quantile(&info, 0.5);
    r.extra.insert("median_info".into(), median_info);
    if let LimitLaw::MixedNormal { v, .. } = &limit {
        r.extra.insert("var_v".into(), stats::variance(v));
        r.extra.insert("p_v_zero".into(), v.iter().filter(|&&x| x == 0.0).count() as f64 / v.len() as f64);
    }
    // the signature uses the limit draws of U = sqrt(I) Z, and the observed
    // scores where the path gives them
    let limit_scores: Vec<f64> = match &limit {
        LimitLaw::MixedNormal { z, info, .. } => z.iter().zip(info).map(|(z, i)| i.sqrt() * z).collect(),
        _ => unreachable!("supercritical limit is mixed normal"),
    };
    r.extra.insert("limit_score_kurtosis".into(), stats::kurtosis(&limit_scores));
    if scores.iter().all(|s| s.is_finite()) {
        r.extra.insert("score_kurtosis".into(), stats::kurtosis(&scores));
    }
    if cfg.u == 0.0 {
        r.gates.push(zero_gate(&lr));
    } else {
        let ks = stats::ks_two_sample(&lr, &draws);
        r.ks = Some(ks);
        r.gates.push(Gate::above("ks_p", ks.p_value, cfg.tolerances.ks_p));
        if r.extra["var_v"] > 0.0 {
            r.gates.push(Gate::above("mixture_kurtosis", r.extra["limit_score_kurtosis"], 3.0));
        }
        let scale = cfg.u * cfg.u * median_info;
        let spread = r.variance.unwrap() / scale;
        r.gates.push(Gate {
            name: "spread_over_u2_median_info".into(),
            value: spread,
            threshold: 10.0,
            pass: (0.1..=10.0).contains(&spread),
        });
    }
    Ok(ExperimentOutput {
        report: r.finish(),
        samples: lr,
        limit_draws: draws,
    })
}

/// Dispatch on the regime of `cfg.params`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    match cfg.regime() {
        Criticality::Subcritical => run_lan(cfg),
        Criticality::Critical => run_laq(cfg),
        Criticality::Supercritical => run_lamn(cfg),
    }
}

/// Empirical Laplace transform of `V` against the closed form.
pub fn v_law_check(p: &CirParams, us: &[f64], m: usize, tol: f64, seed: u64) -> Result<ExperimentOutput> {
    let v = sample_v(p, m, seed)?;
    let mut r = TestReport::new("v-law", seed, m);
    let mut worst: f64 = 0.0;
    for &u in us {
        let emp = stats::mean(&v.iter().map(|v| (u * v).exp()).collect::<Vec<_>>());
        let exact = v_laplace(p, u)?;
        r.extra.insert(format!("empirical_u{u}"), emp);
        r.extra.insert(format!("exact_u{u}"), exact);
        worst = worst.max((emp - exact).abs());
    }
    r.extra.insert("horizon".into(), v_horizon(p.b));
    r.gates.push(Gate::below("max_abs_error", worst, tol));
    Ok(ExperimentOutput {
        report: r.finish(),
        samples: v,
        limit_draws: Vec::new(),
    })
}

/// `E[exp(log dP^{b̃}/dP^{b})] = 1` over `M` paths on `[0, T]`.
pub fn girsanov_unit_mean(
    p: &CirParams,
    b_tilde: f64,
    horizon: f64,
    path_step: f64,
    m: usize,
    seed: u64,
) -> Result<ExperimentOutput> {
    p.validate()?;
    if m < 1000 {
        return Err(invalid(format!("unit-mean check needs at least 1000 replications, got {m}")));
    }
    let steps = (horizon / path_step).round().max(1.0) as usize;
    let lr: Result<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let path = simulate_path(p, horizon, steps, Scheme::ExactBetweenJumps, rng::derive_seed(seed, "girsanov", i as u64))?;
            Ok(loglik_ratio_continuous(&path, p, b_tilde))
        })
        .collect();
    let lr = lr?;
    let mut r = TestReport::new("girsanov", seed, m);
    let um = UnitMean::of_log(&lr);
    r.unit_mean = Some(um);
    r.mean = Some(stats::mean(&lr));
    r.variance = Some(stats::variance(&lr));
    r.extra.insert("b".into(), p.b);
    r.extra.insert("b_tilde".into(), b_tilde);
    r.extra.insert("variance_of_ratio".into(), stats::variance(&lr.iter().map(|x| x.exp()).collect::<Vec<_>>()));
    r.gates.push(um.gate(3.0));
    Ok(ExperimentOutput {
        report: r.finish(),
        samples: lr,
        limit_draws: Vec::new(),
    })
}

/// Time averages of `Y` and `Y²` at the observation times `kΔ`, `k < n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErgodicAverages {
    pub mean: f64,
    pub second: f64,
    pub ones: f64,
    /// Batch-means standard errors.
    pub mean_se: f64,
    pub second_se: f64,
    pub first_half: f64,
    pub second_half: f64,
    pub half_se: f64,
}

const BATCHES: usize = 20;

fn batch_se(xs: &[f64]) -> f64 {
    let len = xs.len() / BATCHES;
    if len == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = xs.chunks(len).take(BATCHES).map(stats::mean).collect();
    stats::std_error(&means)
}

pub fn ergodic_averages(p: &CirParams, n: usize, delta: f64, seed: u64) -> Result<ErgodicAverages> {
    let path = simulate_path(p, n as f64 * delta, n, Scheme::ExactBetweenJumps, seed)?;
    let ys = &path.states[..n];
    let sq: Vec<f64> = ys.iter().map(|y| y * y).collect();
    let ones: Vec<f64> = ys.iter().map(|_| 1.0).collect();
    let (a, b) = ys.split_at(n / 2);
    Ok(ErgodicAverages {
        mean: stats::mean(ys),
        second: stats::mean(&sq),
        ones: stats::mean(&ones),
        mean_se: batch_se(ys),
        second_se: batch_se(&sq),
        first_half: stats::mean(a),
        second_half: stats::mean(b),
        half_se: (batch_se(a).powi(2) + batch_se(b).powi(2)).sqrt(),
    })
}

/// Discrete ergodic averages against `(a + ∫z m)/b`, and the second moment
/// cross-checked between two independent runs.
pub fn ergodic_check(p: &CirParams, n: usize, delta: f64, rel_tol: f64, seed: u64) -> Result<ExperimentOutput> {
    if !(p.b > 0.0) {
        return Err(invalid(format!("ergodic averages need b > 0, got {}", p.b)));
    }
    let one = ergodic_averages(p, n, delta, rng::derive_seed(seed, "ergodic", 0))?;
    let two = ergodic_averages(p, n, delta, rng::derive_seed(seed, "ergodic", 1))?;
    let target = (p.a + p.levy.first_moment()?) / p.b;
    let mut r = TestReport::new("ergodic", seed, n);
    r.mean = Some(one.mean);
    r.target_mean = Some(target);
    r.extra.insert("second_moment".into(), one.second);
    r.extra.insert("second_moment_cross".into(), two.second);
    r.extra.insert("mean_se".into(), one.mean_se);
    r.extra.insert("first_half".into(), one.first_half);
    r.extra.insert("second_half".into(), one.second_half);
    r.gates.push(Gate::below("mean_rel_error", (one.mean / target - 1.0).abs(), rel_tol));
    let se2 = (one.second_se.powi(2) + two.second_se.powi(2)).sqrt();
    r.gates.push(Gate::below("second_moment_z", ((one.second - two.second) / se2).abs(), 3.0));
    r.gates.push(Gate::below("halves_z", ((one.first_half - one.second_half) / one.half_se).abs(), 3.0));
    r.gates.push(Gate {
        name: "constant_average".into(),
        value: one.ones,
        threshold: 1.0,
        pass: one.ones == 1.0,
    });
    Ok(ExperimentOutput {
        report: r.finish(),
        samples: Vec::new(),
        limit_draws: Vec::new(),
    })
}

/// `(qM_T, q²⟨M⟩_T)` for `M_t = ∫ sqrt(Y) dW`, recovered from the path as
/// `σ M_T = R + b S` and `⟨M⟩_T = S`.
pub fn martingale_pairs(p: &CirParams, horizon: f64, path_step: f64, rate: f64, m: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let steps = (horizon / path_step).round().max(1.0) as usize;
    (0..m)
        .into_par_iter()
        .map(|i| {
            let path = simulate_path(p, horizon, steps, Scheme::ExactBetweenJumps, rng::derive_seed(seed, "stable", i as u64))?;
            let s = path.integral();
            let mart = (crate::inference::drift_residual(&path, p.a) + p.b * s) / p.sigma;
            Ok((rate * mart, rate * rate * s))
        })
        .collect()
}

/// Joint behaviour of the normalized martingale and its bracket. `rate`
/// defaults to `1/sqrt(T)` (b > 0) or `e^{bT/2}` (b < 0).
pub fn stable_clt_check(
    p: &CirParams,
    horizon: f64,
    path_step: f64,
    rate: Option<f64>,
    m: usize,
    seed: u64,
) -> Result<ExperimentOutput> {
    let regime = p.classify();
    let q = match (rate, regime) {
        (Some(q), _) => q,
        (None, Criticality::Subcritical) => 1.0 / horizon.sqrt(),
        (None, Criticality::Supercritical) => (0.5 * p.b * horizon).exp(),
        (None, Criticality::Critical) => return Err(invalid("stable CLT check needs b != 0")),
    };
    let pairs = martingale_pairs(p, horizon, path_step, q, m, seed)?;
    let scaled: Vec<f64> = pairs.iter().map(|x| x.0).collect();
    let brackets: Vec<f64> = pairs.iter().map(|x| x.1).collect();
    let student: Vec<f64> = pairs.iter().map(|(a, b)| a / b.sqrt()).collect();
    let mut r = TestReport::new("stable-clt", seed, m);
    r.rate = Some(q);
    r.mean = Some(stats::mean(&scaled));
    r.variance = Some(stats::variance(&scaled));
    r.extra.insert("bracket_mean".into(), stats::mean(&brackets));
    r.extra.insert("bracket_variance".into(), stats::variance(&brackets));
    let ks = stats::ks_one_sample(&student, |x| stats::normal_cdf(x, 0.0, 1.0));
    r.ks = Some(ks);
    r.gates.push(Gate::above("studentized_ks_p", ks.p_value, 0.01));
    if regime == Criticality::Supercritical && rate.is_none() {
        let v = sample_v(p, m, rng::derive_seed(seed, "stable-v", 0))?;
        let limit: Vec<f64> = v.iter().map(|v| -v / p.b).collect();
        let ks2 = stats::ks_two_sample(&brackets, &limit);
        r.extra.insert("bracket_vs_limit_p".into(), ks2.p_value);
        r.gates.push(Gate::above("bracket_vs_limit_p", ks2.p_value, 0.01));
    }
    Ok(ExperimentOutput {
        report: r.finish(),
        samples: student,
        limit_draws: brackets,
    })
}

/// Transition density against the noncentral chi-square law on a
/// `5 × 2 × 5` grid of `(t, x, y)`, normalization, and `∂_b p` against a
/// central difference. `p.levy` is ignored.
pub fn density_oracle_check(p: &CirParams) -> Result<ExperimentOutput> {
    let q = CirParams {
        levy: LevyMeasure::Zero,
        ..p.clone()
    };
    let mut r = TestReport::new("density-oracle", 0, 50);
    let mut max_err: f64 = 0.0;
    let mut max_norm: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    let mut points = 0;
    let h = 1e-4;
    for &t in &[0.05, 0.1, 0.5, 1.0, 2.0] {
        for &x in &[0.5, 2.5] {
            let st = CirParams { y0: x, ..q.clone() };
            let (mean, sd) = (st.mean_at(t), st.variance_at(t).sqrt());
            let hi = mean + 20.0 * sd;
            let table = CharTable::build(&q, t, frequency_bound(&q, t, x, hi), x, true)?;
            for k in [-1.5, -0.75, 0.0, 0.75, 1.5] {
                let y = mean + k * sd;
                let (num, db) = table.density_with_db(x, y)?;
                max_err = max_err.max((num - diffusion_density(q.a, q.b, q.sigma, t, x, y)).abs());
                let fd = (transition_density(&q.with_b(q.b + h), t, x, y)? - transition_density(&q.with_b(q.b - h), t, x, y)?)
                    / (2.0 * h);
                max_rel = max_rel.max((db - fd).abs() / fd.abs().max(1e-2));
                points += 1;
            }
            let opts = QuadOptions::with_tol(1e-12, 1e-11);
            let lo = (mean - 20.0 * sd).max(0.0);
            let mass = integrate(|y: f64| if y > 0.0 { table.density(x, y).unwrap_or(f64::NAN) } else { 0.0 }, lo, hi, &opts)?;
            max_norm = max_norm.max((mass.value - 1.0).abs());
        }
    }
    r.replications = points;
    r.gates.push(Gate::below("max_abs_error", max_err, 1e-6));
    r.gates.push(Gate::below("normalization_error", max_norm, 1e-6));
    r.gates.push(Gate::below("db_relative_error", max_rel, 1e-5));
    Ok(ExperimentOutput {
        report: r.finish(),
        samples: Vec::new(),
        limit_draws: Vec::new(),
    })
}

/// Seeds per scheme in the positivity sweep.
pub const POSITIVITY_SEEDS: u64 = 1000;

/// Fast invariants: path positivity for both schemes, comparison of coupled
/// paths, the flow property of `ψ`, `E[e^{0·Y}] = 1`, the log-ratio identity,
/// jump-shift cancellation in the estimator and byte-identical reruns.
pub fn structural_check(seed: u64) -> Result<ExperimentOutput> {
    use crate::affine::{char_fn, psi};
    use crate::inference::{drift_residual, mle_continuous};
    use crate::sim::JumpMark;
    use num_complex::Complex64;

    let cpe = LevyMeasure::CompoundPoissonExponential { intensity: 1.0, decay: 2.0 };
    let gate = CirParams::new(2.0, 1.0, 0.5, 2.5, cpe.clone());
    let mut r = TestReport::new("structural", seed, POSITIVITY_SEEDS as usize);

    // below the Feller line the diffusion touches zero
    let rough = CirParams::new(0.1, 1.0, 1.0, 0.05, LevyMeasure::Zero);
    let mut negatives = 0usize;
    for p in [&gate, &rough] {
        for scheme in [Scheme::ExactBetweenJumps, Scheme::SymmetrizedEuler] {
            let counts: Result<Vec<usize>> = (0..POSITIVITY_SEEDS)
                .into_par_iter()
                .map(|i| {
                    let path = simulate_path(p, 1.0, 100, scheme, rng::derive_seed(seed, "positivity", i))?;
                    Ok(path.states.iter().filter(|y| !(**y >= 0.0)).count())
                })
                .collect();
            negatives += counts?.iter().sum::<usize>();
        }
    }
    r.gates.push(Gate::below("negative_states", negatives as f64, 0.5));

    let zero = CirParams::new(2.0, 1.0, 0.5, 1.0, LevyMeasure::Zero);
    let jumpy = CirParams {
        levy: LevyMeasure::DiracAtom { rate: 2.0, location: 0.5 },
        ..zero.clone()
    };
    let mut violations = 0usize;
    for i in 0..200 {
        let s = rng::derive_seed(seed, "comparison", i);
        let lo = simulate_path(&zero, 5.0, 500, Scheme::SymmetrizedEuler, s)?;
        let hi = simulate_path(&jumpy, 5.0, 500, Scheme::SymmetrizedEuler, s)?;
        violations += lo.states.iter().zip(&hi.states).filter(|(x, y)| y < x).count();
    }
    r.gates.push(Gate::below("comparison_violations", violations as f64, 0.5));

    let mut flow: f64 = 0.0;
    for b in [-0.5, 0.0, 1.0] {
        let p = gate.with_b(b);
        for (t, s) in [(0.3, 0.7), (1.0, 2.0), (0.01, 5.0)] {
            for u in [Complex64::new(-1.0, 0.0), Complex64::new(0.0, 3.0), Complex64::new(-2.0, -50.0)] {
                let lhs = psi(&p, t + s, u)?;
                let rhs = psi(&p, t, psi(&p, s, u)?)?;
                flow = flow.max((lhs - rhs).norm() / (1.0 + lhs.norm()));
            }
        }
    }
    r.gates.push(Gate::below("psi_flow", flow, 1e-10));

    let mut at_zero: f64 = 0.0;
    for b in [-0.5, 0.0, 1.0] {
        for (t, x) in [(0.1, 0.5), (1.0, 2.5), (5.0, 10.0)] {
            at_zero = at_zero.max((char_fn(&gate.with_b(b), t, x, Complex64::new(0.0, 0.0))? - 1.0).norm());
        }
    }
    r.gates.push(Gate::below("char_fn_at_zero", at_zero, 1e-14));

    let mut identity: f64 = 0.0;
    let mut shift: f64 = 0.0;
    for b in [-0.5, 0.0, 1.0] {
        let p = gate.with_b(b);
        for i in 0..20 {
            let path = simulate_path(&p, 10.0, 1000, Scheme::ExactBetweenJumps, rng::derive_seed(seed, "identity", i))?;
            for (rate, u) in [(0.3, 1.0), (0.05, -2.0), (1.0, 0.5)] {
                let si = score_info(&path, &p, rate);
                let lr = loglik_ratio_continuous(&path, &p, p.b + rate * u);
                identity = identity.max((lr - si.quadratic(u)).abs() / (1.0 + lr.abs()));
            }
            let mut moved = path.clone();
            for y in &mut moved.states[501..] {
                *y += 0.8;
            }
            if let Some(marks) = moved.marks.as_mut() {
                marks.push(JumpMark { time: 5.0, size: 0.8 });
            }
            let r0 = drift_residual(&path, p.a);
            let b1 = mle_continuous(&moved, p.a, p.sigma)?.b_hat;
            shift = shift.max((r0 - drift_residual(&moved, p.a)).abs()).max((b1 + r0 / moved.integral()).abs());
        }
    }
    r.gates.push(Gate::below("loglik_identity", identity, 1e-12));
    r.gates.push(Gate::below("jump_shift_cancellation", shift, 1e-10));

    let cfg = ExperimentConfig {
        params: gate,
        horizon: 10.0,
        path_step: 0.01,
        replications: 50,
        seed,
        ..Default::default()
    };
    let first = run_lan(&cfg)?;
    let second = run_lan(&cfg)?;
    let same = first.report.to_json()? == second.report.to_json()? && first.samples == second.samples;
    r.gates.push(Gate {
        name: "rerun_identical".into(),
        value: if same { 1.0 } else { 0.0 },
        threshold: 1.0,
        pass: same,
    });
    Ok(ExperimentOutput {
        report: r.finish(),
        samples: Vec::new(),
        limit_draws: Vec::new(),
    })
}

impl TestReport {
    /// Append a gate and refresh the overall verdict.
    pub fn push_gate(&mut self, gate: Gate) {
        self.gates.push(gate);
        self.pass = self.gates.iter().all(|g| g.pass);
    }
}
