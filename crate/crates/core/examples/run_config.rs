//! Drives the experiment runner from Rust instead of the command line: builds
//! a config, applies an override and writes artifacts plus a manifest.
//!
//! ```bash
//! cargo run --release --example run_config -- [output_dir]
//! ```

use eulerlab::experiment::{
    apply_override, run_experiment, ExperimentConfig, Manifest, MANIFEST_NAME,
};
use serde_json::json;

fn main() -> eulerlab::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "out/run_config".into());
    let mut value = json!({
        "schema_version": 1,
        "experiment": "invariants",
        "grid": {"nx": 16, "ny": 16, "nz": 16, "lx": 6.283185307179586, "ly": 6.283185307179586,
                 "lz": 6.283185307179586, "domain_kind": "Periodic"},
        "solver": {"dt": 0.01, "t_end": 0.1, "diag_every": 1},
        "initial": {"kind": "taylor_green3d"},
        "invariants": {"mollify_deltas": [0.0, 0.4]}
    });
    apply_override(&mut value, "solver.t_end=0.2")?;
    let cfg = ExperimentConfig::from_value(value.clone())?;
    cfg.validate()?;
    let outcome = run_experiment(&value, &cfg, dir.as_ref())?;
    println!("outcome: {outcome:?}");

    let manifest: Manifest = serde_json::from_slice(&std::fs::read(
        std::path::Path::new(&dir).join(MANIFEST_NAME),
    )?)?;
    for a in &manifest.artifacts {
        println!(
            "{:<32} {} bytes  sha256 {}",
            a.path,
            a.bytes,
            &a.sha256[..16]
        );
    }
    println!(
        "{}",
        std::fs::read_to_string(std::path::Path::new(&dir).join("invariants.json"))?
    );
    Ok(())
}
