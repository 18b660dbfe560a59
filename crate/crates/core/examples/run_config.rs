//! Runs a shipped experiment config from code and prints its checks.
//!
//! `cargo run --release --example run_config [configs/fig1.toml]`

use std::path::PathBuf;

use sgld_lab::experiment::{run_experiment_with, ExperimentConfig};

fn main() -> sgld_lab::Result<()> {
    let path = std::env::args().nth(1).map_or_else(
        || PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/fig1.toml"),
        PathBuf::from,
    );
    let mut cfg = ExperimentConfig::load(&path)?;
    cfg.output_dir = std::env::temp_dir().join(format!("sgld-lab-{}", cfg.experiment.name()));
    let manifest = run_experiment_with(&cfg, None)?;
    for c in &manifest.checks {
        println!(
            "{} {:<36} {:>10.4} (limit {:.4})",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.value,
            c.limit
        );
    }
    for a in &manifest.artifacts {
        println!("wrote {} ({} bytes, sha256 {})", a.file, a.bytes, &a.sha256[..16]);
    }
    println!("config hash {}", manifest.config_hash);
    Ok(())
}
