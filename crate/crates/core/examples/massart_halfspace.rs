//! Learning a halfspace under Massart noise with SGLD on the smoothed
//! empirical zero-one risk.
//!
//! `cargo run --release --example massart_halfspace [out.csv]`

use std::path::PathBuf;

use sgld_lab::linalg::{dot, norm};
use sgld_lab::rng::rng_for;
use sgld_lab::sgld::{sgld_run, SgldConfig};
use sgld_lab::space::ParameterSpace;
use sgld_lab::zeroone::{empirical_risk, population_risks_mc, sample_dataset, MassartModel};

fn main() -> sgld_lab::Result<()> {
    let d = 5;
    let mut rng = rng_for(2024, 0);
    let model = MassartModel::new(vec![1.0, -1.0, 0.5, 0.0, 2.0], 0.5)?;
    let ds = sample_dataset(&model, 20_000, &mut rng)?;
    if let Some(path) = std::env::args().nth(1).map(PathBuf::from) {
        ds.write_csv(&path)?;
        println!("dataset written to {}", path.display());
    }

    let space = ParameterSpace::annulus(0.5, 1.0, d)?;
    let oracle = ds.smoothed_risk(0.1, 1)?;
    let mut cfg = SgldConfig::new(500.0, 1e-4, 200_000);
    cfg.eval_stride = 1000;
    let (x_hat, trace) = sgld_run(
        &oracle,
        |x| empirical_risk(x, &ds).unwrap(),
        &space,
        &cfg,
        &[],
        &mut rng,
    )?;

    let risks = population_risks_mc(&[x_hat.clone(), model.x_star().to_vec()], &model, 1_000_000, &mut rng);
    println!("empirical risk of the output  {:.4}", trace.best_value());
    println!(
        "population risk of the output {:.4} +- {:.4}",
        risks[0].mean, risks[0].se
    );
    println!(
        "population risk of x*         {:.4} +- {:.4}",
        risks[1].mean, risks[1].se
    );
    println!(
        "cosine(x_hat, x*)             {:.4}",
        dot(&x_hat, model.x_star()) / norm(&x_hat)
    );
    Ok(())
}
