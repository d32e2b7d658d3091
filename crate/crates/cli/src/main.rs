//! Experiment runner: structured config in, CSV/JSON artifacts plus a
//! hashed manifest out. Identical config and seed give bit-identical
//! outputs regardless of the worker count.

mod commands;
mod config;
mod manifest;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use manifest::OutputWriter;

#[derive(Parser)]
#[command(name = "htcurve", version, about = "Sparse domination experiments for Hilbert transforms along curves")]
struct Cli {
    /// Path to the TOML experiment config.
    #[arg(long, global = true, default_value = "config.toml")]
    config: PathBuf,

    /// Output directory for artifacts and the manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed override; defaults to the config seed, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Double the quadrature nodes and mesh counts for convergence studies.
    #[arg(long, global = true)]
    refine: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Emit the admissible region vertices and pair membership table.
    Region,
    /// Dyadic grid property suite (nesting, partition, parent ratios).
    GridProps,
    /// Calibrate the localization constant by the support oracle.
    SupportCheck,
    /// Fourier decay study for the arclength measure.
    Decay,
    /// Translation-continuity norm study.
    Continuity,
    /// Sparse construction and domination ratio report.
    Dominate,
    /// Outside-region sharpness scan (control runs need control = true).
    Sharpness,
    /// Muckenhoupt/reverse-Holder constants and the weighted bound check.
    Weights,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Region => "region",
            Command::GridProps => "grid-props",
            Command::SupportCheck => "support-check",
            Command::Decay => "decay",
            Command::Continuity => "continuity",
            Command::Dominate => "dominate",
            Command::Sharpness => "sharpness",
            Command::Weights => "weights",
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(workers) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let config_text = fs::read_to_string(&cli.config)
        .with_context(|| format!("reading config {}", cli.config.display()))?;
    let cfg = ExperimentConfig::load(&config_text)?;
    let seed = cfg.seed(cli.seed);
    let refine = if cli.refine { 2 } else { 1 };

    let mut out = OutputWriter::new(&cli.out)?;
    match cli.command {
        Command::Region => commands::region(&cfg, &mut out)?,
        Command::GridProps => commands::grid_props(&cfg, seed, &mut out)?,
        Command::SupportCheck => commands::support_check(&cfg, refine, &mut out)?,
        Command::Decay => commands::decay(&cfg, &mut out)?,
        Command::Continuity => commands::continuity(&cfg, seed, refine, &mut out)?,
        Command::Dominate => commands::dominate(&cfg, seed, refine, &mut out)?,
        Command::Sharpness => commands::sharpness(&cfg, refine, &mut out)?,
        Command::Weights => commands::weights(&cfg, seed, refine, &mut out)?,
    }
    out.finish(cli.command.name(), seed, &config_text)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
