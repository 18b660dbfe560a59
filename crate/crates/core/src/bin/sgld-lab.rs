use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sgld_lab::experiment::{run_experiment, workers_from_env, ExperimentConfig, EXPERIMENTS};

/// Run and validate SGLD experiment configs.
///
/// Exit codes: 0 all checks passed, 1 a check failed or the run aborted,
/// 2 the config or environment is invalid.
#[derive(Parser)]
#[command(name = "sgld-lab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment and write its artifacts and manifest.
    Run { config: PathBuf },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
    /// List the available experiment kinds.
    ListExperiments,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::ListExperiments => {
            for (name, about) in EXPERIMENTS {
                println!("{name:<18}{about}");
            }
            ExitCode::SUCCESS
        }
        Cmd::Validate { config } => match ExperimentConfig::load(&config) {
            Ok(cfg) => {
                println!(
                    "{}: ok ({}, hash {})",
                    config.display(),
                    cfg.experiment.name(),
                    cfg.hash()
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{}: {e}", config.display());
                ExitCode::from(2)
            }
        },
        Cmd::Run { config } => {
            let cfg = match ExperimentConfig::load(&config).and_then(|c| workers_from_env().map(|_| c)) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{}: {e}", config.display());
                    return ExitCode::from(2);
                }
            };
            let manifest = match run_experiment(&cfg) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("{e}");
                    return ExitCode::from(2);
                }
            };
            for c in &manifest.checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!(
                    "{tag} {:<40} value {:<12.6} limit {:<12.6} {}",
                    c.name, c.value, c.limit, c.detail
                );
            }
            if let Some(err) = &manifest.error {
                eprintln!("run aborted: {err}");
            }
            println!(
                "{}: {} in {:.1}s, outputs in {}",
                manifest.experiment,
                if manifest.passed { "passed" } else { "failed" },
                manifest.wall_clock_seconds,
                cfg.output_dir.display()
            );
            if manifest.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
