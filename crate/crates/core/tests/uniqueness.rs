use std::f64::consts::PI;

use proptest::prelude::*;

use eulerlab::dynamics::SolverConfig;
use eulerlab::uniqueness::{run_paired, write_trace_csv, GronwallConstants, TRACE_CSV_HEADER};
use eulerlab::{flows, GridSpec};

fn cube(n: usize) -> GridSpec {
    GridSpec::periodic_cube(n, 2.0 * PI).unwrap()
}

#[test]
fn perturbed_abc_trace_is_consistent() {
    let spec = cube(16);
    let w1 = flows::abc(spec, 1.0, 1.0, 1.0);
    let amp = 1e-4;
    let w2 = w1
        .add(&flows::single_mode(spec, [1, 2, 0], amp).unwrap())
        .unwrap();
    let out = run_paired(
        &w1,
        &w2,
        &SolverConfig::new(2e-2, 0.4),
        &GronwallConstants::default(),
    )
    .unwrap();
    assert!(out.abort.is_none());
    let tr = &out.trace;
    assert_eq!(tr.len(), 21);

    // Unit-amplitude cosine mode: mean square 1/2 over the torus.
    let phi0 = amp * amp * (2.0 * PI).powi(3) / 2.0;
    // The mode is added onto O(1) values, so the difference carries their rounding.
    assert!(
        (tr[0].phi_norm_sq - phi0).abs() <= 1e-10 * phi0,
        "{} vs {phi0}",
        tr[0].phi_norm_sq
    );
    assert_eq!(tr[0].bound, tr[0].phi_norm_sq);
    assert_eq!(tr[0].integral_a0, 0.0);
    for w in tr.windows(2) {
        assert!(w[1].integral_a0 >= w[0].integral_a0);
        assert!(w[1].bound >= w[0].bound);
        // Trapezoid rule on the recorded A0 values.
        let step = 0.5 * (w[1].t - w[0].t) * (w[0].a0 + w[1].a0);
        assert!(
            (w[1].integral_a0 - w[0].integral_a0 - step).abs() <= 1e-14 * w[1].integral_a0.max(1.0)
        );
    }
    for r in tr {
        assert!(r.satisfied);
        let a0 = r.grad_u1_linf + r.w2_linf;
        assert!((r.a0 - a0).abs() <= 1e-14 * a0);
        let af = 2.0 * (r.grad_u1_linf - r.u1_l3 + r.w2_linf - r.grad_w2_l3);
        assert!((r.a_finite - af).abs() <= 1e-12 * af.abs().max(1.0));
    }

    let mut csv = Vec::new();
    write_trace_csv(&mut csv, tr).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRACE_CSV_HEADER);
    assert_eq!(text.lines().count(), tr.len() + 1);
}

#[test]
fn swapping_the_pair_keeps_the_difference_norm() {
    let spec = cube(16);
    let w1 = flows::taylor_green_3d_vorticity(spec);
    let w2 = w1
        .add(&flows::single_mode(spec, [0, 1, 1], 1e-3).unwrap())
        .unwrap();
    let cfg = SolverConfig::new(2e-2, 0.2);
    let k = GronwallConstants::default();
    let a = run_paired(&w1, &w2, &cfg, &k).unwrap();
    let b = run_paired(&w2, &w1, &cfg, &k).unwrap();
    for (x, y) in a.trace.iter().zip(&b.trace) {
        assert!((x.phi_norm_sq - y.phi_norm_sq).abs() <= 1e-13 * x.phi_norm_sq);
    }
}

#[test]
fn bad_constants_are_rejected() {
    let spec = cube(8);
    let w = flows::abc(spec, 1.0, 1.0, 1.0);
    let k = GronwallConstants {
        slack: -1.0,
        ..GronwallConstants::default()
    };
    assert!(run_paired(&w, &w, &SolverConfig::new(1e-2, 0.1), &k).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn initial_difference_norm_matches_closed_form(
        mode in prop::array::uniform3(-3i64..=3).prop_filter("nonzero", |m| *m != [0; 3]),
        amp in 1e-8f64..1e-1,
    ) {
        let spec = cube(16);
        let w1 = flows::abc(spec, 1.0, 0.5, 0.25);
        let w2 = w1.add(&flows::single_mode(spec, mode, amp).unwrap()).unwrap();
        let out = run_paired(&w1, &w2, &SolverConfig::new(1e-2, 1e-2), &GronwallConstants::default()).unwrap();
        let phi0 = amp * amp * (2.0 * PI).powi(3) / 2.0;
        // The added mode is summed onto O(1) values, so the difference carries their rounding.
        prop_assert!((out.trace[0].phi_norm_sq - phi0).abs() <= 1e-13 * (2.0 * PI).powi(3) * amp + 1e-12 * phi0);
        prop_assert!(out.trace.iter().all(|r| r.satisfied));
    }
}
