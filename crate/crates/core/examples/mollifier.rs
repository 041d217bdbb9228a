//! Space-time mollification of a snapshot sequence and the equivalent Fourier
//! multiplier used by the solver.
//!
//! ```bash
//! cargo run --release --example mollifier
//! ```

use std::f64::consts::PI;

use eulerlab::mollifier::{
    kernel_moment, mollify, spatial_multiplier, BumpKernel, SnapshotSequence,
};
use eulerlab::{DomainKind, GridSpec, VectorField};

fn main() -> eulerlab::Result<()> {
    let k = BumpKernel::new(0.5)?;
    for axis in 0..4 {
        println!(
            "axis {axis}: mass {:.12}  first {:+.2e}  second {:.6e}",
            kernel_moment(&k, axis, 0),
            kernel_moment(&k, axis, 1),
            kernel_moment(&k, axis, 2)
        );
    }

    let n = 64;
    let h = 2.0 * PI / n as f64;
    let spec = GridSpec::new(
        [n, 4, 4],
        [2.0 * PI, 4.0 * h, 4.0 * h],
        DomainKind::Periodic,
    )?;
    let f = VectorField::from_fn(spec, |[x, _, _]| [x.sin(), 0.0, 1.0]);
    let steps = (k.delta / h).floor() as usize;
    let count = 2 * steps + 1;
    let seq = SnapshotSequence::new(
        (0..count).map(|i| i as f64 * h).collect(),
        vec![f.clone(); count],
    )?;
    let m = mollify(&seq, &k, steps)?;

    let attenuation = m.components[0][spec.index(n / 4, 0, 0)];
    println!("sin x attenuated by {attenuation:.8}");
    println!(
        "constant component reproduced to {:.2e}",
        m.component(2).map(|v| v - 1.0).max_abs()
    );

    let mult = spatial_multiplier(&spec, &k, h)?;
    println!("multiplier at k = 1: {:.8}", mult[1]);
    Ok(())
}
