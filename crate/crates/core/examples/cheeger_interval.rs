//! Brute-force restricted Cheeger constants and a vector-field lower bound.
//!
//! `cargo run --release --example cheeger_interval`

use std::sync::Arc;

use sgld_lab::cheeger::{
    cheeger_bruteforce, default_eps, describe, positivity_bound, vectorfield_lower_bound, Divergence, Family,
    GridMeasure, VectorField,
};
use sgld_lab::space::ParameterSpace;

fn main() -> sgld_lab::Result<()> {
    let space = ParameterSpace::cube(0.0, 1.0, 1)?;
    let eps = default_eps(&space);

    // Uniform measure: a set touching the boundary of K pays for one endpoint,
    // an interior one for two.
    let gm = GridMeasure::build(&space, |_| 0.0, 2000)?;
    let family = Family::Intervals { points: 2001 };
    for (lo, hi) in [(0.0, 0.5), (0.25, 0.75)] {
        let v = gm.set_where("V", |x| x[0] >= lo && x[0] <= hi);
        let candidates = family.materialize(&gm, &v)?;
        let est = cheeger_bruteforce(&gm, &v, &candidates, &family.name(), &eps)?;
        println!("V = [{lo}, {hi}]: C = {:.4}", est.value);
        describe(&est, std::io::stdout())?;
        println!(
            "positivity bound {:.4}\n",
            positivity_bound(&gm, &v, eps[eps.len() - 1])
        );
    }

    // f(x) = 10x pushes mass toward 0, so escaping V = [0.3, 1] is easy.
    let gm = GridMeasure::build(&space, |x| 10.0 * x[0], 2000)?;
    let v = gm.set_where("V", |x| x[0] >= 0.3);
    let candidates = Family::standard(1).materialize(&gm, &v)?;
    let est = cheeger_bruteforce(&gm, &v, &candidates, "standard", &eps)?;
    let ell = 0.05;
    let field = VectorField {
        phi: Arc::new(move |x: &[f64]| vec![1.0 - (-x[0] / ell).exp()]),
        divergence: Divergence::Closed(Arc::new(move |x: &[f64]| (-x[0] / ell).exp() / ell)),
        step_bound: ell,
        space: space.clone(),
    };
    let points: Vec<Vec<f64>> = (0..=700).map(|i| vec![0.3 + i as f64 * 1e-3]).collect();
    let lb = vectorfield_lower_bound(&field, |_| vec![10.0], 1.0, &points)?;
    println!(
        "f = 10x on V = [0.3, 1]: brute force {:.4}, vector-field bound {lb:.4}",
        est.value
    );
    Ok(())
}
