use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use nlch::{execute, parse_config, Command};

/// Nonlocal Cahn-Hilliard solver with reaction.
#[derive(Parser, Debug)]
#[command(name = "nlch", version)]
struct Args {
    /// run | pair | equilibrium | remainder | trace
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `init.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(args: &Args) -> anyhow::Result<bool> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("in {}", args.config.display()))?;
    if let Some(dir) = &args.out {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let outcome = execute(&cfg, args.command)?;
    for check in outcome.checks.iter().filter(|c| !c.passed) {
        eprintln!("FAIL {}: {}", check.name, check.detail);
    }
    println!("{}", cfg.output_dir.join("report.txt").display());
    Ok(outcome.success())
}
