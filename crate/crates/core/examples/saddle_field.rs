//! A vector field whose divergence is negative near a strict saddle.
//!
//! `cargo run --release --example saddle_field`

use sgld_lab::cheeger::{saddle_field, SmoothnessProfile};
use sgld_lab::linalg::norm;
use sgld_lab::objective::ObjectiveSpec;
use sgld_lab::space::ParameterSpace;

fn main() -> sgld_lab::Result<()> {
    let space = ParameterSpace::ball(vec![0.0, 0.0], 2.0)?;
    let f = ObjectiveSpec::SaddleTest {
        dim: 2,
        quartic: 1.0,
        cos_amp: 0.0,
        cos_freq: 1.0,
    }
    .build_raw();
    let profile = SmoothnessProfile::estimate(f.as_ref(), &space, 40_000, 1.01, 0.0, 0.0)?;
    println!("gradient bound {:.3}, smoothness bound {:.3}", profile.g, profile.l);
    let field = saddle_field(f.clone(), 0.04, None, &profile, &space)?;
    for x in [[0.0, 0.0], [0.01, -0.02], [0.5, 0.5], [1.0, 1.0], [-1.5, 0.2]] {
        let phi = field.value(&x);
        println!("x = {x:?}: |phi| = {:.4}, div phi = {:+.4}", norm(&phi), field.div(&x));
    }
    Ok(())
}
