//! TOML run configuration.
//!
//! ```toml
//! command = "experiment"
//! seed = 42
//! output_dir = "out"
//!
//! [params]
//! a = 2.0
//! b = 1.0
//! sigma = 0.5
//! y0 = 2.5
//! levy = { kind = "compound-poisson-exponential", intensity = 1.0, decay = 2.0 }
//!
//! [experiment]
//! name = "continuous-lan"
//! ```
//!
//! Every section has defaults, so only the keys that differ need to appear.
//! Unknown keys are rejected with their line and column.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::Tolerances;
use crate::levy::LevyMeasure;
use crate::malliavin::{TestFunction, DEFAULT_DELTAS};
use crate::sim::{CirParams, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Density,
    Estimate,
    Experiment,
    Malliavin,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Density => "density",
            Command::Estimate => "estimate",
            Command::Experiment => "experiment",
            Command::Malliavin => "malliavin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    ContinuousLan,
    DiscreteLan,
    ContinuousLaq,
    DiscreteLaq,
    ContinuousLamn,
    DiscreteLamn,
    VLaw,
    DensityOracle,
    Girsanov,
    Ergodic,
    StableClt,
    Structural,
}

impl ExperimentName {
    pub fn is_discrete(&self) -> bool {
        matches!(
            self,
            ExperimentName::DiscreteLan | ExperimentName::DiscreteLaq | ExperimentName::DiscreteLamn
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub horizon: f64,
    pub steps: usize,
    pub scheme: Scheme,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            horizon: 10.0,
            steps: 1000,
            scheme: Scheme::ExactBetweenJumps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensitySection {
    pub t: f64,
    /// Starting point; defaults to `params.y0`.
    pub x: Option<f64>,
    pub y_min: f64,
    pub y_max: f64,
    pub points: usize,
}

impl Default for DensitySection {
    fn default() -> Self {
        DensitySection {
            t: 1.0,
            x: None,
            y_min: 0.01,
            y_max: 8.0,
            points: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSection {
    pub observation: Sampling,
    pub replications: usize,
    pub horizon: f64,
    pub path_step: f64,
    pub obs_count: usize,
    pub obs_step: f64,
    /// Search interval for the discrete maximizer.
    pub interval: Option<[f64; 2]>,
}

impl Default for EstimateSection {
    fn default() -> Self {
        EstimateSection {
            observation: Sampling::Continuous,
            replications: 100,
            horizon: 100.0,
            path_step: 0.01,
            obs_count: 2000,
            obs_step: 0.05,
            interval: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub name: ExperimentName,
    pub u: f64,
    pub horizon: f64,
    pub path_step: f64,
    pub obs_count: usize,
    pub obs_step: f64,
    pub replications: usize,
    pub limit_replications: usize,
    pub tolerances: Tolerances,
    /// Alternative drift for `girsanov`.
    pub b_tilde: f64,
    /// Laplace arguments for `v-law`.
    pub laplace_points: Vec<f64>,
    pub laplace_tol: f64,
    /// Relative tolerance of the `ergodic` mean.
    pub ergodic_tol: f64,
    /// Rate override for `stable-clt`.
    pub rate: Option<f64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            name: ExperimentName::ContinuousLan,
            u: 1.0,
            horizon: 100.0,
            path_step: 0.01,
            obs_count: 2000,
            obs_step: 0.05,
            replications: 500,
            limit_replications: 10_000,
            tolerances: Tolerances::default(),
            b_tilde: 1.2,
            laplace_points: vec![-0.5, -1.0, -2.0],
            laplace_tol: 0.02,
            ergodic_tol: 0.05,
            rate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MalliavinSection {
    pub x: f64,
    pub deltas: Vec<f64>,
    pub replications: usize,
    /// Interval length of the integration-by-parts check.
    pub ibp_delta: f64,
    pub function: TestFunction,
    /// Lower bound on the fitted slope of `log E[H²]` against `log Δ`.
    pub min_slope: f64,
}

impl Default for MalliavinSection {
    fn default() -> Self {
        MalliavinSection {
            x: 1.0,
            deltas: DEFAULT_DELTAS.to_vec(),
            replications: 100_000,
            ibp_delta: 0.05,
            function: TestFunction::Exp { rate: 1.0 },
            min_slope: 3.0,
        }
    }
}

fn default_params() -> CirParams {
    CirParams::new(
        2.0,
        1.0,
        0.5,
        2.5,
        LevyMeasure::CompoundPoissonExponential { intensity: 1.0, decay: 2.0 },
    )
}

fn default_output_dir() -> PathBuf {
    PathBuf::from(".")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub allow_outside_a3: bool,
    #[serde(default = "default_params")]
    pub params: CirParams,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub density: DensitySection,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub malliavin: MalliavinSection,
}

impl RunConfig {
    /// Whether the command needs `a/σ²` above the discrete-observation bound.
    pub fn needs_discrete_condition(&self) -> bool {
        match self.command {
            Command::Estimate => self.estimate.observation == Sampling::Discrete,
            Command::Experiment => self.experiment.name.is_discrete(),
            Command::Malliavin => true,
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate().map_err(|e| config_error(format!("params: {e}")))?;
        if self.threads == Some(0) {
            return Err(config_error("threads must be at least 1"));
        }
        if self.needs_discrete_condition() && !self.allow_outside_a3 {
            self.params.check_discrete_condition()?;
        }
        match self.command {
            Command::Simulate => {
                let s = &self.simulate;
                positive("simulate.horizon", s.horizon)?;
                if s.steps == 0 {
                    return Err(config_error("simulate.steps must be at least 1"));
                }
                if s.scheme == Scheme::Imported {
                    return Err(config_error("simulate.scheme cannot be imported"));
                }
            }
            Command::Density => {
                let d = &self.density;
                positive("density.t", d.t)?;
                if let Some(x) = d.x {
                    positive("density.x", x)?;
                }
                if !(d.y_min > 0.0 && d.y_max > d.y_min) || d.points < 2 {
                    return Err(config_error("density grid needs 0 < y_min < y_max and points >= 2"));
                }
            }
            Command::Estimate => {
                let e = &self.estimate;
                if e.replications == 0 {
                    return Err(config_error("estimate.replications must be at least 1"));
                }
                match e.observation {
                    Sampling::Continuous => {
                        positive("estimate.horizon", e.horizon)?;
                        positive("estimate.path_step", e.path_step)?;
                    }
                    Sampling::Discrete => {
                        positive("estimate.obs_step", e.obs_step)?;
                        if e.obs_count == 0 {
                            return Err(config_error("estimate.obs_count must be at least 1"));
                        }
                    }
                }
                if let Some([lo, hi]) = e.interval {
                    if !(lo < hi) {
                        return Err(config_error(format!("estimate.interval must satisfy lo < hi, got [{lo}, {hi}]")));
                    }
                }
            }
            Command::Experiment => {
                let x = &self.experiment;
                if !x.u.is_finite() {
                    return Err(config_error("experiment.u must be finite"));
                }
                positive("experiment.horizon", x.horizon)?;
                positive("experiment.path_step", x.path_step)?;
                positive("experiment.obs_step", x.obs_step)?;
                if x.replications < 2 {
                    return Err(config_error("experiment.replications must be at least 2"));
                }
            }
            Command::Malliavin => {
                let m = &self.malliavin;
                positive("malliavin.x", m.x)?;
                positive("malliavin.ibp_delta", m.ibp_delta)?;
                if m.deltas.len() < 2 || m.deltas.iter().any(|d| !(*d > 0.0)) {
                    return Err(config_error("malliavin.deltas needs at least two positive values"));
                }
            }
        }
        Ok(())
    }
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_error(format!("{key} must be positive, got {v}")))
    }
}

/// Parse without range checks, for callers that apply overrides first.
pub fn parse_unchecked(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| config_error(e.to_string()))
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg = parse_unchecked(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Serialize a configuration; `parse_config(&emit_config(c)?)` returns `c`.
pub fn emit_config(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| config_error(e.to_string()))
}
