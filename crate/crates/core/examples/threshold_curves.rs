//! Empirical and population risk of 1D thresholds under label noise,
//! written as tidy plot data.
//!
//! `cargo run --release --example threshold_curves [out.csv]`

use std::path::PathBuf;

use sgld_lab::experiment::{emit_plot_data, Curve};
use sgld_lab::rng::rng_for;
use sgld_lab::zeroone::fig1_tasks;

fn main() -> sgld_lab::Result<()> {
    let curves = fig1_tasks(5000, 0.5, 1001, &mut rng_for(1, 0))?;
    let spurious = curves.spurious_minima(0.02);
    println!("sup |empirical - population| = {:.4}", curves.sup_gap());
    println!(
        "{} local minima of the empirical risk that the population risk lacks",
        spurious.len()
    );
    for &i in spurious.iter().take(5) {
        println!(
            "  x = {:.3}  empirical {:.4}  population {:.4}",
            curves.grid[i], curves.empirical[i], curves.population[i]
        );
    }
    let path = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("threshold_curves.csv"), PathBuf::from);
    let rows = emit_plot_data(
        &[
            Curve {
                series: "empirical".into(),
                x: curves.grid.clone(),
                y: curves.empirical.clone(),
            },
            Curve {
                series: "population".into(),
                x: curves.grid.clone(),
                y: curves.population.clone(),
            },
        ],
        &path,
    )?;
    println!("{rows} rows written to {}", path.display());
    Ok(())
}
