use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mrbsde::config::parse_config;
use mrbsde::runner::{run, verdict_lines, RunOptions};

/// Simulation laboratory for BSDEs with mean constraints on the control.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// Path to the run configuration (TOML).
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the configured number of paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Skip SVG figure generation.
    #[arg(long)]
    no_figures: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", cli.config.display());
            return ExitCode::FAILURE;
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(dir) = cli.output_dir {
        cfg.output_dir = dir.to_string_lossy().into_owned();
    }
    if let Some(paths) = cli.paths {
        cfg.mc.n_paths = paths;
    }
    if let Some(seed) = cli.seed {
        cfg.mc.seed = seed;
    }

    match run(&cfg, &RunOptions { no_figures: cli.no_figures }) {
        Ok(outcome) => {
            for line in verdict_lines(&outcome.summary) {
                println!("{line}");
            }
            println!("summary written to {}", outcome.summary_path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
