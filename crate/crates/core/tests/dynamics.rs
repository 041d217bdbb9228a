mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::random_band_limited;
use eulerlab::dynamics::{self, SolverConfig, Stepper};
use eulerlab::spectral::Spectral;
use eulerlab::velocity_recovery::velocity_from_vorticity_periodic;
use eulerlab::{flows, GridSpec, VectorField};

fn cube(n: usize) -> GridSpec {
    GridSpec::periodic_cube(n, 2.0 * PI).unwrap()
}

fn evolve(w0: &VectorField, dt: f64, t_end: f64) -> VectorField {
    let mut s = Stepper::new(w0, SolverConfig::new(dt, t_end)).unwrap();
    while s.steps() < s.config().n_steps() {
        s.step().unwrap();
    }
    s.vorticity()
}

#[test]
fn taylor_green_time_error_is_fourth_order() {
    let w0 = flows::taylor_green_3d_vorticity(cube(32));
    // Power-of-two steps land exactly on t_end.
    let reference = evolve(&w0, 1.0 / 512.0, 0.5);
    let errors: Vec<f64> = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]
        .iter()
        .map(|&dt| evolve(&w0, dt, 0.5).sub(&reference).unwrap().max_abs())
        .collect();
    for pair in errors.windows(2) {
        let order = (pair[0] / pair[1]).log2();
        assert!(
            (order - 4.0).abs() < 0.4,
            "errors {errors:?}, order {order}"
        );
    }
}

#[test]
fn abc_energy_is_conserved() {
    let w0 = flows::abc(cube(32), 1.0, 1.0, 1.0);
    let mut cfg = SolverConfig::new(1e-2, 2.0);
    cfg.diag_every = 20;
    let out = dynamics::run(&w0, &cfg, |_, _, _| Ok(())).unwrap();
    let e0 = out.records[0].energy;
    for r in &out.records {
        assert!(
            ((r.energy - e0) / e0).abs() <= 1e-10,
            "t = {}: {} vs {e0}",
            r.t,
            r.energy
        );
    }
    // ABC energy is |u|^2 / 2 averaged times the volume: (A^2 + B^2 + C^2) / 2 * (2 pi)^3.
    let exact = 1.5 * (2.0 * PI).powi(3);
    assert!((e0 - exact).abs() / exact < 1e-13, "{e0} vs {exact}");
}

#[test]
fn taylor_green_initial_diagnostics() {
    let r = dynamics::diagnostics(&flows::taylor_green_3d_vorticity(cube(16)), 0.0).unwrap();
    // u = (sin x cos y cos z, -cos x sin y cos z, 0): energy (1/2) int |u|^2 = (2 pi)^3 / 8.
    let e = (2.0 * PI).powi(3) / 8.0;
    assert!((r.energy - e).abs() / e < 1e-13);
    // Enstrophy int |w|^2 with |w|^2 averaging to 3/4.
    let z = 0.75 * (2.0 * PI).powi(3);
    assert!((r.enstrophy - z).abs() / z < 1e-13);
    assert!(r.max_div_u < 1e-13 && r.max_div_w < 1e-13);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn random_fields_stay_solenoidal_with_zero_mean(seed in any::<u64>(), delta in prop_oneof![Just(0.0), 0.1f64..0.5]) {
        let spec = cube(16);
        let sp = Spectral::new(spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = VectorField { spec, components: [0, 1, 2].map(|_| random_band_limited(&sp, 3, &mut rng)) };
        // Curl of a random field is a valid solenoidal vorticity.
        let w0 = eulerlab::operators::curl(&u).unwrap().scale(0.1);
        let mut cfg = SolverConfig::new(1e-2, 0.05);
        cfg.mollify_delta = delta;
        let mut s = Stepper::new(&w0, cfg).unwrap();
        for _ in 0..5 {
            s.step().unwrap();
        }
        let r = s.diagnostics().unwrap();
        prop_assert!(r.max_div_w < 1e-12, "div w = {}", r.max_div_w);
        prop_assert!(r.total_vorticity_integral.abs() < 1e-12);
        prop_assert!(r.moment_integrals.iter().all(|m| m.abs() < 1e-12));
        // Recovered velocity has curl equal to the evolved vorticity.
        let w = s.vorticity();
        let back = eulerlab::operators::curl(&velocity_from_vorticity_periodic(&w).unwrap()).unwrap();
        prop_assert!(back.sub(&w).unwrap().max_abs() < 1e-12);
    }
}
