//! Executes a [`RunConfig`] and writes its artifacts.
//!
//! Artifacts are named `{command}-{seed}.{ext}` inside the output directory.
//! They are written to temporary files first and renamed only after the
//! whole command has succeeded, so a failed run leaves nothing behind.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::affine::DensityGrid;
use crate::config::{emit_config, parse_config, Command, ExperimentName, RunConfig, Sampling};
use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig, ExperimentOutput, Gate, Observation, TestReport};
use crate::inference::{
    loglik_discrete_with_score, loglik_ratio_continuous, mle_continuous, mle_discrete, score_info, write_estimates,
    DiscreteObs, EstimateRow,
};
use crate::malliavin::{ibp_check, scan_moments, IbpReport, ScanReport};
use crate::rng;
use crate::sim::{simulate_path, Criticality, Scheme};
use crate::stats;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_GATE_FAIL: i32 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// One-line summary for the terminal.
    pub summary: String,
    /// False when a statistical gate failed.
    pub pass: bool,
    pub artifacts: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            EXIT_PASS
        } else {
            EXIT_GATE_FAIL
        }
    }
}

struct Pending {
    dir: PathBuf,
    stem: String,
    files: Vec<(NamedTempFile, String)>,
}

impl Pending {
    fn new(cfg: &RunConfig) -> Result<Pending> {
        std::fs::create_dir_all(&cfg.output_dir)?;
        Ok(Pending {
            dir: cfg.output_dir.clone(),
            stem: format!("{}-{}", cfg.command.as_str(), cfg.seed),
            files: Vec::new(),
        })
    }

    fn add(&mut self, ext: &str, fill: impl FnOnce(&mut NamedTempFile) -> Result<()>) -> Result<()> {
        let mut tmp = NamedTempFile::new_in(&self.dir)?;
        fill(&mut tmp)?;
        tmp.flush()?;
        self.files.push((tmp, ext.to_string()));
        Ok(())
    }

    fn json<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
        self.add("json", |f| {
            f.write_all(text.as_bytes())?;
            f.write_all(b"\n")?;
            Ok(())
        })
    }

    fn commit(self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::with_capacity(self.files.len());
        for (tmp, ext) in self.files {
            let path = self.dir.join(format!("{}.{}", self.stem, ext));
            tmp.persist(&path).map_err(|e| Error::Io(e.error))?;
            out.push(path);
        }
        Ok(out)
    }
}

/// Read, parse and validate a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Run the command, using `cfg.threads` worker threads when given.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    match cfg.threads {
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            pool.install(|| dispatch(cfg))
        }
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: &RunConfig) -> Result<RunOutcome> {
    match cfg.command {
        Command::Simulate => simulate(cfg),
        Command::Density => density(cfg),
        Command::Estimate => estimate(cfg),
        Command::Experiment => experiment(cfg),
        Command::Malliavin => malliavin(cfg),
    }
}

fn simulate(cfg: &RunConfig) -> Result<RunOutcome> {
    let s = &cfg.simulate;
    let path = simulate_path(&cfg.params, s.horizon, s.steps, s.scheme, cfg.seed).map_err(|e| e.tag("cir_sim", "simulate"))?;
    let mut pending = Pending::new(cfg)?;
    pending.add("csv", |f| path.write_csv(f))?;
    let artifacts = pending.commit()?;
    Ok(RunOutcome {
        summary: format!(
            "simulate: {} steps to T = {}, Y_T = {:.6}, min Y = {:.6}",
            s.steps,
            s.horizon,
            path.y_end(),
            path.states.iter().cloned().fold(f64::INFINITY, f64::min)
        ),
        pass: true,
        artifacts,
    })
}

fn density(cfg: &RunConfig) -> Result<RunOutcome> {
    let d = &cfg.density;
    let x = d.x.unwrap_or(cfg.params.y0);
    let step = (d.y_max - d.y_min) / (d.points - 1) as f64;
    let ys: Vec<f64> = (0..d.points).map(|i| d.y_min + step * i as f64).collect();
    let grid = DensityGrid::compute(&cfg.params, d.t, x, &ys).map_err(|e| e.tag("affine_density", "grid"))?;
    let mass = grid.density.iter().sum::<f64>() * step;
    let mut pending = Pending::new(cfg)?;
    pending.add("csv", |f| grid.write_csv(f))?;
    let artifacts = pending.commit()?;
    Ok(RunOutcome {
        summary: format!(
            "density: t = {}, x = {}, {} points, grid mass {:.6}, {} panels",
            d.t, x, d.points, mass, grid.panels
        ),
        pass: true,
        artifacts,
    })
}

/// `φ` for the sign of `b` at horizon `t`.
fn default_rate(b: f64, t: f64) -> f64 {
    if b > 0.0 {
        1.0 / t.sqrt()
    } else if b < 0.0 {
        (0.5 * b * t).exp()
    } else {
        1.0 / t
    }
}

#[derive(Debug, Serialize)]
struct EstimateSummary {
    schema_version: u32,
    observation: Sampling,
    replications: usize,
    b: f64,
    rate: f64,
    mean_b_hat: f64,
    sd_b_hat: f64,
    mean_score: f64,
    mean_info: f64,
}

fn estimate(cfg: &RunConfig) -> Result<RunOutcome> {
    let e = &cfg.estimate;
    let p = &cfg.params;
    let span = match e.observation {
        Sampling::Continuous => e.horizon,
        Sampling::Discrete => e.obs_count as f64 * e.obs_step,
    };
    let rate = default_rate(p.b, span);
    let mut rows = Vec::with_capacity(e.replications);
    for i in 0..e.replications {
        let seed = rng::derive_seed(cfg.seed, "estimate", i as u64);
        let tag = |err: Error| err.tag("inference", format!("replication {i}"));
        let row = match e.observation {
            Sampling::Continuous => {
                let steps = (e.horizon / e.path_step).round().max(1.0) as usize;
                let path = simulate_path(p, e.horizon, steps, Scheme::ExactBetweenJumps, seed).map_err(tag)?;
                let mle = mle_continuous(&path, p.a, p.sigma).map_err(tag)?;
                let si = score_info(&path, p, rate);
                EstimateRow {
                    seed,
                    b_hat: mle.b_hat,
                    score: si.score,
                    info: si.info,
                    loglik: loglik_ratio_continuous(&path, p, mle.b_hat),
                }
            }
            Sampling::Discrete => {
                let path = simulate_path(p, span, e.obs_count, Scheme::ExactBetweenJumps, seed).map_err(tag)?;
                let obs = DiscreteObs::new(e.obs_step, path.states).map_err(tag)?;
                let mle = mle_discrete(&obs, p, e.interval.map(|[lo, hi]| (lo, hi))).map_err(tag)?;
                let (_, db) = loglik_discrete_with_score(&obs, p).map_err(tag)?;
                let left: f64 = obs.values[..obs.len() - 1].iter().sum::<f64>() * obs.dt;
                EstimateRow {
                    seed,
                    b_hat: mle.b_hat,
                    score: rate * db,
                    info: rate * rate * left / (p.sigma * p.sigma),
                    loglik: mle.objective,
                }
            }
        };
        rows.push(row);
    }
    let pick = |f: fn(&EstimateRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let b_hat = pick(|r| r.b_hat);
    let summary = EstimateSummary {
        schema_version: harness::SCHEMA_VERSION,
        observation: e.observation,
        replications: e.replications,
        b: p.b,
        rate,
        mean_b_hat: stats::mean(&b_hat),
        sd_b_hat: if b_hat.len() > 1 { stats::variance(&b_hat).sqrt() } else { 0.0 },
        mean_score: stats::mean(&pick(|r| r.score)),
        mean_info: stats::mean(&pick(|r| r.info)),
    };
    let mut pending = Pending::new(cfg)?;
    pending.add("csv", |f| write_estimates(&rows, f))?;
    pending.json(&summary)?;
    let artifacts = pending.commit()?;
    Ok(RunOutcome {
        summary: format!(
            "estimate: {} replications, mean b_hat = {:.6} (sd {:.6}), b = {}",
            e.replications, summary.mean_b_hat, summary.sd_b_hat, p.b
        ),
        pass: true,
        artifacts,
    })
}

/// Harness configuration for the LAN/LAQ/LAMN experiments of `cfg`.
pub fn experiment_config(cfg: &RunConfig, observation: Observation) -> ExperimentConfig {
    let x = &cfg.experiment;
    ExperimentConfig {
        params: cfg.params.clone(),
        observation,
        u: x.u,
        horizon: x.horizon,
        path_step: x.path_step,
        obs_count: x.obs_count,
        obs_step: x.obs_step,
        replications: x.replications,
        limit_replications: x.limit_replications,
        seed: cfg.seed,
        allow_outside_a3: cfg.allow_outside_a3,
        tolerances: x.tolerances,
    }
}

fn regime_run(cfg: &RunConfig, observation: Observation, want: Criticality) -> Result<ExperimentOutput> {
    let ec = experiment_config(cfg, observation);
    match want {
        Criticality::Subcritical => harness::run_lan(&ec),
        Criticality::Critical => harness::run_laq(&ec),
        Criticality::Supercritical => harness::run_lamn(&ec),
    }
}

/// Run the named experiment without writing anything.
pub fn run_named_experiment(cfg: &RunConfig) -> Result<ExperimentOutput> {
    use ExperimentName::*;
    let x = &cfg.experiment;
    let p = &cfg.params;
    let out = match x.name {
        ContinuousLan => regime_run(cfg, Observation::Continuous, Criticality::Subcritical),
        DiscreteLan => regime_run(cfg, Observation::Discrete, Criticality::Subcritical),
        ContinuousLaq => regime_run(cfg, Observation::Continuous, Criticality::Critical),
        DiscreteLaq => regime_run(cfg, Observation::Discrete, Criticality::Critical),
        ContinuousLamn => regime_run(cfg, Observation::Continuous, Criticality::Supercritical),
        DiscreteLamn => regime_run(cfg, Observation::Discrete, Criticality::Supercritical),
        VLaw => harness::v_law_check(p, &x.laplace_points, x.replications, x.laplace_tol, cfg.seed),
        DensityOracle => harness::density_oracle_check(p),
        Girsanov => harness::girsanov_unit_mean(p, x.b_tilde, x.horizon, x.path_step, x.replications, cfg.seed),
        Ergodic => harness::ergodic_check(p, x.obs_count, x.obs_step, x.ergodic_tol, cfg.seed),
        StableClt => harness::stable_clt_check(p, x.horizon, x.path_step, x.rate, x.replications, cfg.seed),
        Structural => structural(cfg),
    };
    out.map_err(|e| e.tag("asymptotics_harness", format!("{:?}", x.name)))
}

fn structural(cfg: &RunConfig) -> Result<ExperimentOutput> {
    let mut out = harness::structural_check(cfg.seed)?;
    let same = match emit_config(cfg).and_then(|t| parse_config(&t)) {
        Ok(back) => back == *cfg,
        Err(_) => false,
    };
    out.report.push_gate(Gate {
        name: "config_round_trip".into(),
        value: if same { 1.0 } else { 0.0 },
        threshold: 1.0,
        pass: same,
    });
    Ok(out)
}

fn failed_gates(report: &TestReport) -> String {
    let failed: Vec<&str> = report.gates.iter().filter(|g| !g.pass).map(|g| g.name.as_str()).collect();
    if failed.is_empty() {
        String::new()
    } else {
        format!(" (failed: {})", failed.join(", "))
    }
}

fn experiment(cfg: &RunConfig) -> Result<RunOutcome> {
    let out = run_named_experiment(cfg)?;
    let mut pending = Pending::new(cfg)?;
    pending.json(&out.report)?;
    if !out.samples.is_empty() || !out.limit_draws.is_empty() {
        pending.add("csv", |f| out.write_samples_csv(f))?;
    }
    let artifacts = pending.commit()?;
    let r = &out.report;
    Ok(RunOutcome {
        summary: format!(
            "experiment {}: {}{}",
            r.experiment,
            if r.pass { "PASS" } else { "FAIL" },
            failed_gates(r)
        ),
        pass: r.pass,
        artifacts,
    })
}

/// Moment scan of `H` and the integration-by-parts check, with gates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MalliavinReport {
    pub schema_version: u32,
    pub scan: ScanReport,
    pub ibp: IbpReport,
    pub gates: Vec<Gate>,
    pub pass: bool,
}

/// Run the `malliavin` command without writing anything.
pub fn run_malliavin(cfg: &RunConfig) -> Result<MalliavinReport> {
    let m = &cfg.malliavin;
    let p = &cfg.params;
    if !cfg.allow_outside_a3 {
        p.check_discrete_condition()?;
    }
    let scan = scan_moments(p, m.x, &m.deltas, m.replications, cfg.seed).map_err(|e| e.tag("malliavin_weights", "scan"))?;
    let ibp = ibp_check(p, m.x, m.ibp_delta, m.function, m.replications, cfg.seed)
        .map_err(|e| e.tag("malliavin_weights", "ibp"))?;
    let mut gates: Vec<Gate> = scan
        .rows
        .iter()
        .map(|r| Gate::below(&format!("mean_H_z_delta_{}", r.delta), (r.mean_h / r.se).abs(), 3.0))
        .collect();
    gates.push(Gate {
        name: "m2_slope".into(),
        value: scan.slope,
        threshold: m.min_slope,
        pass: scan.slope >= m.min_slope,
    });
    gates.push(Gate::below("ibp_z", ibp.z.abs(), 3.0));
    let pass = gates.iter().all(|g| g.pass);
    Ok(MalliavinReport {
        schema_version: harness::SCHEMA_VERSION,
        scan,
        ibp,
        gates,
        pass,
    })
}

fn malliavin(cfg: &RunConfig) -> Result<RunOutcome> {
    let report = run_malliavin(cfg)?;
    let mut pending = Pending::new(cfg)?;
    pending.json(&report)?;
    pending.add("csv", |f| report.scan.write_csv(f))?;
    let artifacts = pending.commit()?;
    let failed: Vec<&str> = report.gates.iter().filter(|g| !g.pass).map(|g| g.name.as_str()).collect();
    Ok(RunOutcome {
        summary: format!(
            "malliavin: slope {:.3}, ibp z {:.3}: {}{}",
            report.scan.slope,
            report.ibp.z,
            if report.pass { "PASS" } else { "FAIL" },
            if failed.is_empty() { String::new() } else { format!(" (failed: {})", failed.join(", ")) }
        ),
        pass: report.pass,
        artifacts,
    })
}
