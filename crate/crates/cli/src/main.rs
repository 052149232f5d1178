use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use jcir::config::{parse_unchecked, Command as ConfigCommand};
use jcir::runner::{self, EXIT_ERROR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Cmd {
    Simulate,
    Density,
    Estimate,
    Experiment,
    Malliavin,
}

impl Cmd {
    fn as_config(self) -> ConfigCommand {
        match self {
            Cmd::Simulate => ConfigCommand::Simulate,
            Cmd::Density => ConfigCommand::Density,
            Cmd::Estimate => ConfigCommand::Estimate,
            Cmd::Experiment => ConfigCommand::Experiment,
            Cmd::Malliavin => ConfigCommand::Malliavin,
        }
    }
}

/// Simulation, density and likelihood experiments for the jump-type CIR process.
///
/// Exit status: 0 when every gate passes, 2 when a gate fails, 1 on error.
#[derive(Debug, Parser)]
#[command(name = "jcir", version)]
struct Args {
    command: Cmd,
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Run discrete-observation commands even when a/sigma^2 is below the bound.
    #[arg(long)]
    allow_outside_a3: bool,
}

fn run(args: Args) -> jcir::Result<i32> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = parse_unchecked(&text).map_err(|e| jcir::Error::Config(format!("{}: {e}", args.config.display())))?;
    let wanted = args.command.as_config();
    if cfg.command != wanted {
        return Err(jcir::Error::Config(format!(
            "{} is a `{}` config, not `{}`",
            args.config.display(),
            cfg.command.as_str(),
            wanted.as_str()
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if args.threads.is_some() {
        cfg.threads = args.threads;
    }
    cfg.allow_outside_a3 |= args.allow_outside_a3;
    let outcome = runner::execute(&cfg)?;
    println!("{}", outcome.summary);
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
