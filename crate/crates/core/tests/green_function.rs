mod common;

use std::f64::consts::PI;

use proptest::prelude::*;

use common::fd_green;
use eulerlab::velocity_recovery::{
    box_green, halfspace_green, BoxGreenSpec, BoxSineSeries, QuadratureRule,
};
use eulerlab::{DomainKind, GridSpec};

fn unit_box(n_terms: usize) -> BoxGreenSpec {
    BoxGreenSpec {
        l1: 1.0,
        l2: 1.0,
        l3: 1.0,
        n_terms,
        tol: 1e-6,
    }
}

#[test]
fn box_series_matches_finite_difference_solve() {
    let b = unit_box(64);
    let n = 64;
    let src = [32usize, 24, 40];
    let fd = fd_green(n, src, b.lengths());
    let h = 1.0 / n as f64;
    let x0 = src.map(|i| i as f64 * h);
    let mut worst: f64 = 0.0;
    for i in (6..n).step_by(8) {
        for j in (2..n).step_by(12) {
            for k in (3..n).step_by(10) {
                if [i, j, k] == src {
                    continue;
                }
                let x = [i, j, k].map(|v| v as f64 * h);
                let g = box_green(x, x0, &b).unwrap().value;
                worst = worst.max((g - fd([i, j, k])).abs() / g.abs());
            }
        }
    }
    assert!(worst < 0.01, "worst relative difference {worst}");
}

#[test]
fn sine_series_inverts_lowest_mode() {
    let spec = BoxGreenSpec {
        l1: 1.0,
        l2: 1.5,
        l3: 0.75,
        n_terms: 8,
        tol: 1e-6,
    };
    let l = spec.lengths();
    let grid = GridSpec::new([33, 41, 25], l, DomainKind::BoxDirichlet).unwrap();
    let mode = |p: [f64; 3]| (0..3).map(|a| (PI * p[a] / l[a]).sin()).product::<f64>();
    let values: Vec<f64> = (0..grid.len()).map(|i| mode(grid.point(i))).collect();
    let series =
        BoxSineSeries::from_samples(&spec, &grid, &values, QuadratureRule::Trapezoid).unwrap();
    let lambda = PI * PI * (1.0 / (l[0] * l[0]) + 1.0 / (l[1] * l[1]) + 1.0 / (l[2] * l[2]));
    for p in [[0.5, 0.75, 0.375], [0.1, 1.2, 0.6], [0.9, 0.3, 0.05]] {
        let got = series.evaluate(p).unwrap().value;
        assert!(
            (got - mode(p) / lambda).abs() < 1e-12,
            "{p:?}: {got} vs {}",
            mode(p) / lambda
        );
    }
}

#[test]
fn out_of_box_points_are_rejected() {
    assert!(box_green([1.1, 0.5, 0.5], [0.5; 3], &unit_box(4)).is_err());
    assert!(box_green([0.5; 3], [0.5, -0.1, 0.5], &unit_box(4)).is_err());
}

proptest! {
    #[test]
    fn box_green_is_symmetric_and_vanishes_on_faces(
        x in prop::array::uniform3(0.0f64..1.0),
        xp in prop::array::uniform3(0.0f64..1.0),
        face in 0usize..6,
    ) {
        let b = unit_box(12);
        prop_assert_eq!(box_green(x, xp, &b).unwrap().value.to_bits(), box_green(xp, x, &b).unwrap().value.to_bits());
        let mut xf = x;
        xf[face % 3] = (face / 3) as f64;
        prop_assert_eq!(box_green(xf, xp, &b).unwrap().value, 0.0);
    }

    #[test]
    fn halfspace_green_is_symmetric_positive_and_zero_on_wall(
        x in prop::array::uniform3(-5.0f64..5.0),
        xp in prop::array::uniform3(-5.0f64..5.0),
    ) {
        let x = [x[0], x[1], x[2].abs() + 1e-3];
        let xp = [xp[0], xp[1], xp[2].abs() + 1e-3];
        prop_assert!(halfspace_green(x, xp) > 0.0);
        let (a, b) = (halfspace_green(x, xp), halfspace_green(xp, x));
        prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        prop_assert_eq!(halfspace_green([x[0], x[1], 0.0], xp), 0.0);
    }
}
