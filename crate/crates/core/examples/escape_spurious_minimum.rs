//! SGLD leaves a shallow basin that traps SGD.
//!
//! `cargo run --release --example escape_spurious_minimum`

use sgld_lab::objective::{argmin_on, ExactGradient, ObjectiveSpec};
use sgld_lab::rng::rng_for;
use sgld_lab::sgld::{sgd_run, sgld_run, SgldConfig, TargetSet};
use sgld_lab::space::ParameterSpace;

fn main() -> sgld_lab::Result<()> {
    let space = ParameterSpace::cube(-1.0, 1.0, 1)?;
    let f = ObjectiveSpec::PerturbedDoubleWell {
        height: 1.0,
        well: 0.5,
        tilt: 0.3,
        amplitude: 0.05,
        frequency: 30.0,
    }
    .build(&space)?;
    let smooth = ObjectiveSpec::DoubleWell {
        height: 1.0,
        well: 0.5,
        tilt: 0.3,
    }
    .build(&space)?;
    let x_min = argmin_on(smooth.as_ref(), &space, 10_000);
    let target = TargetSet::ball("global", x_min.clone(), 0.0, 0.1);
    let oracle = ExactGradient(f.clone());
    println!("global minimizer of the smooth part: {:.4}", x_min[0]);

    for xi in [1.0, 5.0, 20.0] {
        let mut cfg = SgldConfig::new(xi, 1e-4, 200_000);
        cfg.start = Some(vec![0.5]);
        cfg.eval_stride = 100;
        let (best, trace) = sgld_run(
            &oracle,
            |x| f.value(x),
            &space,
            &cfg,
            std::slice::from_ref(&target),
            &mut rng_for(7, 1),
        )?;
        println!(
            "SGLD xi={xi:<5} hit at {:>8}  best x {:+.4}  f {:.4}  acceptance {:.4}",
            trace.hitting["global"].map_or("never".to_string(), |k| k.to_string()),
            best[0],
            trace.best_value(),
            trace.acceptance_rate()
        );
    }

    let mut cfg = SgldConfig::new(1.0, 1e-4, 200_000);
    cfg.start = Some(vec![0.5]);
    let (best, trace) = sgd_run(&oracle, |x| f.value(x), &space, &cfg, &[target], &mut rng_for(7, 0))?;
    println!(
        "SGD            hit at {:>8}  best x {:+.4}  f {:.4}",
        trace.hitting["global"].map_or("never".to_string(), |k| k.to_string()),
        best[0],
        trace.best_value()
    );
    Ok(())
}
