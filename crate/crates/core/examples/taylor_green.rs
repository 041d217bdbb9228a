//! RK4 evolution of the 3D Taylor–Green vortex with the diagnostic stream:
//! energy, enstrophy, the total-vorticity integral and its moments.
//!
//! ```bash
//! cargo run --release --example taylor_green -- [n] [t_end] [out.csv]
//! ```

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;

use eulerlab::dynamics::{run, write_diagnostics_csv, SolverConfig};
use eulerlab::{flows, GridSpec};

fn main() -> eulerlab::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(32);
    let t_end: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.5);
    let spec = GridSpec::periodic_cube(n, 2.0 * PI)?;
    let w0 = flows::taylor_green_3d_vorticity(spec);

    let mut cfg = SolverConfig::new(5e-3, t_end);
    cfg.diag_every = 10;
    let out = run(&w0, &cfg, |_, _, _| Ok(()))?;

    let e0 = out.records[0].energy;
    for r in &out.records {
        println!(
            "t = {:.3}  E = {:.12}  Z = {:.6}  intV = {:+.2e}  dealias = {:.2e}",
            r.t, r.energy, r.enstrophy, r.total_vorticity_integral, r.dealias_energy_frac
        );
    }
    let last = out.records.last().unwrap();
    println!(
        "relative energy drift {:.3e} after {} steps",
        (last.energy - e0).abs() / e0,
        out.steps
    );

    if let Some(path) = args.get(3) {
        write_diagnostics_csv(BufWriter::new(File::create(path)?), &out.records)?;
        println!("wrote {path}");
    }
    Ok(())
}
