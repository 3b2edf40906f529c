//! `fracdens`: density estimation for SDEs driven by fractional Brownian motion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use commands::Output;
use config::Config;

#[derive(Parser, Debug)]
#[command(name = "fracdens", version, about)]
struct Cli {
    /// Configuration file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides `seed` in the configuration).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override a configuration key, `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Sample SDE or fBm paths.
    Simulate,
    /// Conditional density given a conditioning path.
    Density,
    /// Transition density from a point with a random Wiener past.
    Transition,
    /// Stationary density.
    Stationary,
    /// Stationary densities over a grid of drift rates.
    Sweep,
    /// Run a named validation experiment.
    Validate { experiment: String },
    /// Averaged coefficients and slow-fast paths.
    Averaging,
}

fn build_config(cli: &Cli) -> Result<Config> {
    let mut c = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for kv in &cli.set {
        c.set(kv).with_context(|| format!("--set {kv}"))?;
    }
    if let Some(s) = cli.seed {
        c.insert("seed", s);
    }
    Ok(c)
}

fn run(cli: &Cli) -> Result<i32> {
    if let Cmd::Validate { experiment } = &cli.cmd {
        if !commands::EXPERIMENTS.contains(&experiment.as_str()) {
            eprintln!("error: unknown experiment '{experiment}'");
            eprintln!("known experiments: {}", commands::EXPERIMENTS.join(", "));
            return Ok(2);
        }
    }
    let mut c = build_config(cli)?;
    let mut out = Output::new(&cli.out)?;
    let code = match &cli.cmd {
        Cmd::Simulate => commands::simulate(&c, &mut out).map(|_| 0)?,
        Cmd::Density => commands::density(&c, &mut out).map(|_| 0)?,
        Cmd::Transition => commands::transition(&c, &mut out).map(|_| 0)?,
        Cmd::Stationary => commands::stationary(&c, &mut out).map(|_| 0)?,
        Cmd::Sweep => commands::sweep(&c, &mut out).map(|_| 0)?,
        Cmd::Averaging => commands::averaging(&mut c, &mut out).map(|_| 0)?,
        Cmd::Validate { experiment } => commands::validate(experiment, &mut c, &mut out)?,
    };
    for k in c.unused() {
        log::warn!("configuration key `{k}` was not used");
    }
    out.config_echo(&c)?;
    for p in &out.written {
        log::info!("wrote {}", p.display());
    }
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let pool = match cli.workers {
        Some(0) => {
            eprintln!("error: invalid value 0 for `--workers`: must be at least 1");
            return ExitCode::from(2);
        }
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
