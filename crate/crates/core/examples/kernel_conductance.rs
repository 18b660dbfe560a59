//! Discretized Metropolis-Hastings kernel and its restricted conductance.
//!
//! `cargo run --release --example kernel_conductance`

use sgld_lab::chain::{build_kernel_1d, conductance_estimate, conductance_lower_bound, MhConfig};
use sgld_lab::cheeger::{cheeger_bruteforce, default_eps, Family, GridMeasure};
use sgld_lab::objective::ObjectiveSpec;
use sgld_lab::space::ParameterSpace;
use sgld_lab::stats::tv_distance;

fn main() -> sgld_lab::Result<()> {
    let space = ParameterSpace::cube(-1.0, 1.0, 1)?;
    let f = ObjectiveSpec::DoubleWell {
        height: 0.3,
        well: 0.6,
        tilt: 0.1,
    }
    .build(&space)?;
    let (xi, eta_tilde, n) = (1.0, 1.5e-4, 400);

    let cfg = MhConfig::from_eta_tilde(eta_tilde, xi, 1, 0);
    let km = build_kernel_1d(f.as_ref(), &space, &cfg, n)?;
    let fg = f.clone();
    let gm = GridMeasure::build(&space, move |x| xi * fg.value(x), n)?;
    println!("row error {:.2e}", km.max_row_error());
    println!("min diagonal {:.4}", km.min_diagonal());
    println!("detailed balance {:.2e}", km.detailed_balance_error());
    println!("TV(stationary, Gibbs) {:.2e}", tv_distance(&km.q, gm.weights()));

    let v = gm.set_where("V", |x| x[0] >= 0.2);
    let v_rho = gm.dilate(&v, 0.05);
    let family = Family::standard(1);
    let c = cheeger_bruteforce(
        &gm,
        &v_rho,
        &family.materialize(&gm, &v_rho)?,
        &family.name(),
        &default_eps(&space),
    )?;
    let (phi, argmin) = conductance_estimate(&km, &v, &family.materialize(&gm, &v)?)?;
    println!(
        "conductance {phi:.5} (set {argmin}) >= bound {:.2e} from C(V_rho) = {:.4}",
        conductance_lower_bound(eta_tilde, 1, c.value),
        c.value
    );
    Ok(())
}
