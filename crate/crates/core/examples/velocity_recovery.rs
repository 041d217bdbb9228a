//! Velocity from vorticity on three geometries: spectral inversion on the torus,
//! whole-space Biot–Savart quadrature with its convergence study, and the box
//! Green's function series.
//!
//! ```bash
//! cargo run --release --example velocity_recovery
//! ```

use std::f64::consts::PI;

use eulerlab::velocity_recovery::{
    box_green, bump_convergence_study, observed_orders, velocity_from_vorticity_periodic,
    BoxGreenSpec, QuadratureRule,
};
use eulerlab::{flows, GridSpec, VectorField};

fn main() -> eulerlab::Result<()> {
    // Torus: w = (0, 0, cos x) has velocity (0, sin x, 0).
    let spec = GridSpec::periodic_cube(16, 2.0 * PI)?;
    let w = VectorField::from_fn(spec, |[x, _, _]| [0.0, 0.0, x.cos()]);
    let u = velocity_from_vorticity_periodic(&w)?;
    let exact = VectorField::from_fn(spec, |[x, _, _]| [0.0, x.sin(), 0.0]);
    println!("torus single mode error   {:.3e}", u.sub(&exact)?.max_abs());
    let abc = flows::abc(spec, 1.0, 1.0, 1.0);
    println!(
        "ABC self-velocity error   {:.3e}",
        velocity_from_vorticity_periodic(&abc)?.sub(&abc)?.max_abs()
    );

    // Whole space: compact bump with known velocity.
    let levels = bump_convergence_study(&[16, 32, 64], QuadratureRule::Trapezoid)?;
    for l in &levels {
        println!(
            "n = {:3}  h = {:.4}  max div = {:.3e}  max err = {:.3e}",
            l.n, l.h, l.max_divergence, l.max_error
        );
    }
    println!(
        "divergence orders {:?}",
        observed_orders(&levels, |l| l.max_divergence)
    );
    println!(
        "error orders      {:?}",
        observed_orders(&levels, |l| l.max_error)
    );

    // Box: symmetric Green's function, zero on the faces.
    let b = BoxGreenSpec {
        l1: 1.0,
        l2: 2.0,
        l3: 1.5,
        n_terms: 64,
        tol: 1e-6,
    };
    let (x, xp) = ([0.3, 0.7, 0.4], [0.6, 1.1, 0.9]);
    let g = box_green(x, xp, &b)?;
    println!(
        "G_b(x, x') = {:.10}  G_b(x', x) = {:.10}  tail {:.2e}",
        g.value,
        box_green(xp, x, &b)?.value,
        g.tail_estimate
    );
    println!(
        "G_b on a face = {}",
        box_green([0.0, 0.7, 0.4], xp, &b)?.value
    );
    Ok(())
}
