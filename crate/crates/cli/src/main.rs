mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::ExperimentConfig;
use output::Provenance;

/// Environment variable that overrides the config's master seed.
const SEED_ENV: &str = "SHELAB_SEED";

#[derive(Parser)]
#[command(name = "shelab", version, about = "Heat-kernel checks, moment solvers and SPDE Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel identities and free-space comparisons on a grid.
    VerifyKernels(RunArgs),
    /// Kernel-estimate sweeps and renewal checks.
    Bounds(RunArgs),
    /// Second-moment (or two-point) Volterra solve and growth rates.
    Solve(RunArgs),
    /// Monte Carlo ensemble of the discretised equation.
    Simulate(RunArgs),
    /// Critical noise level, optionally with a Monte Carlo λ scan.
    Threshold(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config with a matching `command` field.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the number of Monte Carlo paths.
    #[arg(long)]
    paths: Option<u64>,
    /// Override the master seed (takes precedence over SHELAB_SEED).
    #[arg(long)]
    seed: Option<u64>,
}

impl Command {
    fn parts(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::VerifyKernels(a) => ("verify-kernels", a),
            Command::Bounds(a) => ("bounds", a),
            Command::Solve(a) => ("solve", a),
            Command::Simulate(a) => ("simulate", a),
            Command::Threshold(a) => ("threshold", a),
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let (name, args) = cli.command.parts();
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if cfg.name() != name {
        bail!("config is for `{}`, not `{name}`", cfg.name());
    }

    let env_seed = match std::env::var(SEED_ENV) {
        Ok(v) => Some(v.trim().parse::<u64>().with_context(|| format!("{SEED_ENV}={v} is not a u64"))?),
        Err(_) => None,
    };
    let override_seed = args.seed.map(|s| (s, "flag")).or(env_seed.map(|s| (s, "env")));
    let mut config_seed = None;
    if let Some(sim) = cfg.sim_mut() {
        config_seed = Some(sim.master_seed);
        if let Some((s, _)) = override_seed {
            sim.master_seed = s;
        }
    }
    if let Some(p) = args.paths {
        match cfg.paths_mut() {
            Some(paths) => *paths = p,
            None => bail!("--paths only applies to stochastic runs"),
        }
    }
    cfg.validate()?;

    let dir = args
        .out
        .clone()
        .or_else(|| cfg.out().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let prov = Provenance {
        command: name.to_string(),
        generated_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        config_seed,
        override_seed: config_seed.and(override_seed),
    };

    let outcome = match &cfg {
        ExperimentConfig::VerifyKernels(c) => commands::verify_kernels(c, &dir, &prov)?,
        ExperimentConfig::Bounds(c) => commands::bounds(c, &dir, &prov)?,
        ExperimentConfig::Solve(c) => commands::solve(c, &dir, &prov)?,
        ExperimentConfig::Simulate(c) => commands::simulate(c, &dir, &prov)?,
        ExperimentConfig::Threshold(c) => commands::threshold(c, &dir, &prov)?,
    };

    let effective_seed = cfg.sim_mut().map(|s| s.master_seed);
    let manifest = json!({
        "tool": "shelab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": name,
        "generated_unix": prov.generated_unix,
        "config": cfg,
        "seed": {
            "config": config_seed,
            "effective": effective_seed,
            "source": prov.override_seed.map(|(_, src)| src).unwrap_or("config"),
        },
        "files": outcome.files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "checks": { "passed": outcome.passed, "failed": outcome.failures.len() },
        "failures": outcome.failures,
        "status": if outcome.failures.is_empty() { "pass" } else { "fail" },
    });
    let path = dir.join("run_manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;

    for f in &outcome.failures {
        eprintln!("FAIL {f}");
    }
    println!(
        "{name}: {} passed, {} failed; outputs in {}",
        outcome.passed,
        outcome.failures.len(),
        dir.display()
    );
    Ok(outcome.failures.is_empty())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
