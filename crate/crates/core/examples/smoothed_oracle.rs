//! Gaussian smoothing turns the zero-one loss into a smooth objective with an
//! unbiased stochastic gradient.
//!
//! `cargo run --release --example smoothed_oracle`

use sgld_lab::objective::unbiasedness_check;
use sgld_lab::rng::rng_for;
use sgld_lab::space::ParameterSpace;
use sgld_lab::zeroone::{sample_dataset, MassartModel};

fn main() -> sgld_lab::Result<()> {
    let mut rng = rng_for(11, 0);
    let model = MassartModel::new(vec![1.0, 0.0], 0.5)?;
    let ds = sample_dataset(&model, 200, &mut rng)?;
    let s = ds.smoothed_risk(0.2, 1)?;
    println!(
        "sigma {}  smoothness bound 2B/sigma^2 = {}",
        s.sigma(),
        s.smoothness_bound()
    );

    for x in [[0.7, 0.1], [0.0, -0.8]] {
        for (j, c) in unbiasedness_check(&s, &x, 100_000, 100_000, 0.05, &mut rng)
            .iter()
            .enumerate()
        {
            println!(
                "x = {x:?} coord {j}: gradient mean {:+.4}, finite difference {:+.4}, z {:+.2}",
                c.grad_mean, c.fd, c.z_score
            );
        }
    }

    let space = ParameterSpace::annulus(0.5, 1.0, 2)?;
    let rep = s.verify_smoothness_constant(&space, 10, 20_000, &mut rng)?;
    println!(
        "max curvature {:.3} (se {:.3}) vs bound {:.1}",
        rep.max_curvature, rep.curvature_se, rep.bound
    );
    Ok(())
}
