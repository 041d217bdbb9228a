//! Spectral calculus on a periodic grid: curl of a gradient and divergence of a
//! curl vanish to rounding, and the Poisson solver inverts the Laplacian.
//!
//! ```bash
//! cargo run --release --example operator_calculus
//! ```

use std::f64::consts::PI;

use eulerlab::operators::{
    curl, divergence, gradient, laplacian, poisson_solve_periodic, volume_integral,
};
use eulerlab::{flows, GridSpec, ScalarField};

fn main() -> eulerlab::Result<()> {
    let spec = GridSpec::periodic_cube(32, 2.0 * PI)?;

    let s = ScalarField::from_fn(spec, |[x, y, z]| {
        (x + 2.0 * y).sin() * z.cos() + (3.0 * x).cos()
    });
    let cg = curl(&gradient(&s)?)?;
    println!("max |curl grad s|     = {:.3e}", cg.max_abs());

    let w = flows::random_band_limited_vorticity(spec, 5, 42, 1.0)?;
    println!("max |div w|           = {:.3e}", divergence(&w)?.max_abs());
    println!(
        "max |div curl w|      = {:.3e}",
        divergence(&curl(&w)?)?.max_abs()
    );

    let lap = laplacian(&s)?;
    let back = poisson_solve_periodic(&lap)?;
    // The solver returns the mean-free solution; s has zero mean.
    println!("max |s - lap^-1 lap s| = {:.3e}", back.sub(&s)?.max_abs());
    println!("integral of s         = {:.3e}", volume_integral(&s)?);
    Ok(())
}
