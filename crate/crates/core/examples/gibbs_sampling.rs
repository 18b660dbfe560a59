//! Metropolis-Hastings samples of a double well against the grid Gibbs measure.
//!
//! `cargo run --release --example gibbs_sampling`

use sgld_lab::chain::{mh_run, MhConfig};
use sgld_lab::cheeger::GridMeasure;
use sgld_lab::objective::ObjectiveSpec;
use sgld_lab::space::ParameterSpace;
use sgld_lab::stats::{histogram, tv_distance};

fn main() -> sgld_lab::Result<()> {
    let space = ParameterSpace::cube(-1.0, 1.0, 1)?;
    let f = ObjectiveSpec::DoubleWell {
        height: 0.3,
        well: 0.6,
        tilt: 0.0,
    }
    .build(&space)?;
    let xi = 5.0;
    let bins = 25;

    let fg = f.clone();
    let gm = GridMeasure::build(&space, move |x| xi * fg.value(x), 2000)?;
    let exact = gm.bin_masses(-1.0, 1.0, bins)?;

    let cfg = MhConfig::from_eta_tilde(1e-3, xi, 1_000_000, 3);
    let samples = mh_run(f.as_ref(), &space, &cfg, None)?;
    let xs = samples.coord(0);
    let hist = histogram(&xs, -1.0, 1.0, bins);

    println!("{:>8} {:>10} {:>10}", "x", "chain", "gibbs");
    for b in 0..bins {
        let x = -1.0 + (b as f64 + 0.5) * 2.0 / bins as f64;
        println!("{x:>8.3} {:>10.4} {:>10.4}", hist[b], exact[b]);
    }
    println!("total variation: {:.4}", tv_distance(&hist, &exact));
    Ok(())
}
