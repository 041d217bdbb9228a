//! Residual reports for the closed-form vorticity families and the spurt
//! superposition. Numbers are measurements with a two-resolution check.
//!
//! ```bash
//! cargo run --release --example exact_families
//! ```

use eulerlab::families::{
    family_residual_report, spurt_residual_report, BaseFlow, FamilyKind, FamilySpec, ReportConfig,
    SpurtSpec, TimeModulation,
};

fn main() -> eulerlab::Result<()> {
    let mut cfg = ReportConfig::new(vec![0.0, 0.5, 1.0]);
    cfg.base = Some(BaseFlow::Abc {
        a: 1.0,
        b: 1.0,
        c: 1.0,
    });

    let gamma = TimeModulation::PolyExp {
        offset: 1.0,
        scale: 0.5,
        power: 2,
        rate: 1.0,
    };
    let families = [
        FamilySpec {
            kind: FamilyKind::R3Bumps {
                radius: 1.5,
                center: [std::f64::consts::PI; 3],
                amplitudes: [1.0; 3],
            },
            modulation: gamma,
        },
        FamilySpec {
            kind: FamilyKind::Box {
                a1: 0.5,
                a2: 0.5,
                a3: 0.5,
                l1: 1.0,
                l2: 1.0,
                l3: 1.0,
            },
            modulation: TimeModulation::default_quiescent(),
        },
    ];
    let stdout = std::io::stdout();
    for f in &families {
        family_residual_report(f, &cfg)?.write_csv(stdout.lock())?;
    }

    let spurt = SpurtSpec {
        c1: 1.0,
        c2: 0.5,
        c3: 0.0,
        f: TimeModulation::default_quiescent(),
        g: TimeModulation::SinSquared {
            offset: 0.0,
            scale: 1.0,
            omega: 2.0,
        },
        h: TimeModulation::default_quiescent(),
        l: 2.0 * std::f64::consts::PI,
    };
    let report = spurt_residual_report(&spurt, &cfg)?;
    report.write_csv(stdout.lock())?;
    for e in &report.entries {
        println!(
            "t = {}: pressure jump closed form {:?}",
            e.t,
            spurt.aperiodicity_closed_form(e.t, cfg.rho)
        );
    }
    Ok(())
}
