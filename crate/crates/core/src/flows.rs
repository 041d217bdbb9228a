//! Closed-form periodic flows used as initial data and oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::operators;

/// ABC (Arnold–Beltrami–Childress) velocity; it equals its own curl.
pub fn abc(spec: GridSpec, a: f64, b: f64, c: f64) -> VectorField {
    VectorField::from_fn(spec, |p| {
        let [x, y, z] = p;
        [
            a * z.sin() + c * y.cos(),
            b * x.sin() + a * z.cos(),
            c * y.sin() + b * x.cos(),
        ]
    })
}

pub fn taylor_green_3d_velocity(spec: GridSpec) -> VectorField {
    VectorField::from_fn(spec, |[x, y, z]| {
        [
            x.sin() * y.cos() * z.cos(),
            -x.cos() * y.sin() * z.cos(),
            0.0,
        ]
    })
}

pub fn taylor_green_3d_vorticity(spec: GridSpec) -> VectorField {
    VectorField::from_fn(spec, |[x, y, z]| {
        [
            -x.cos() * y.sin() * z.sin(),
            -x.sin() * y.cos() * z.sin(),
            2.0 * x.sin() * y.sin() * z.cos(),
        ]
    })
}

/// Steady 2D Taylor–Green velocity `(-cos x sin y, sin x cos y, 0)`.
pub fn taylor_green_2d_velocity(spec: GridSpec) -> VectorField {
    VectorField::from_fn(spec, |[x, y, _]| {
        [-x.cos() * y.sin(), x.sin() * y.cos(), 0.0]
    })
}

/// Curl of [`taylor_green_2d_velocity`]: `(0, 0, 2 cos x cos y)`.
pub fn taylor_green_2d_vorticity(spec: GridSpec) -> VectorField {
    VectorField::from_fn(spec, |[x, y, _]| [0.0, 0.0, 2.0 * x.cos() * y.cos()])
}

/// Pressure balancing [`taylor_green_2d_velocity`]: `-(rho/4)(cos 2x + cos 2y)`.
pub fn taylor_green_2d_pressure(spec: GridSpec, rho: f64) -> ScalarField {
    ScalarField::from_fn(spec, |[x, y, _]| {
        -0.25 * rho * ((2.0 * x).cos() + (2.0 * y).cos())
    })
}

/// Random solenoidal, mean-free vorticity: the curl of a vector potential with
/// uniformly random Fourier amplitudes on the integer modes `0 < |m|_inf <= kmax`.
pub fn random_band_limited_vorticity(
    spec: GridSpec,
    kmax: usize,
    seed: u64,
    amplitude: f64,
) -> Result<VectorField> {
    if !spec.is_periodic() {
        return Err(Error::WrongDomain {
            expected: "Periodic",
            got: format!("{:?}", spec.domain_kind),
        });
    }
    let nmin = spec.nx.min(spec.ny).min(spec.nz);
    if kmax == 0 || 2 * kmax >= nmin {
        return Err(Error::BadParam(format!(
            "kmax = {kmax} must be in 1..{}",
            nmin / 2
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = kmax as i64;
    let mut modes = Vec::new();
    for mz in -k..=k {
        for my in -k..=k {
            for mx in 0..=k {
                // One representative of each +-m pair.
                if mx == 0 && (my < 0 || (my == 0 && mz <= 0)) {
                    continue;
                }
                let coef: [[f64; 2]; 3] = std::array::from_fn(|_| {
                    [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
                });
                modes.push(([mx as f64, my as f64, mz as f64], coef));
            }
        }
    }
    let l = spec.lengths();
    let scale = [0, 1, 2].map(|a| 2.0 * std::f64::consts::PI / l[a]);
    let potential = VectorField::from_fn(spec, |p| {
        let mut v = [0.0; 3];
        for (m, coef) in &modes {
            let phase = m[0] * scale[0] * p[0] + m[1] * scale[1] * p[1] + m[2] * scale[2] * p[2];
            let (s, c) = phase.sin_cos();
            for a in 0..3 {
                v[a] += coef[a][0] * c + coef[a][1] * s;
            }
        }
        v
    });
    let w = operators::curl(&potential)?;
    let peak = w.max_abs();
    Ok(if peak > 0.0 {
        w.scale(amplitude / peak)
    } else {
        w
    })
}

/// Solenoidal single Fourier mode `amplitude * d cos(k . x)` with `k` the integer
/// wavevector `mode` and `d` a unit vector orthogonal to it.
pub fn single_mode(spec: GridSpec, mode: [i64; 3], amplitude: f64) -> Result<VectorField> {
    if mode == [0; 3] {
        return Err(Error::BadParam(
            "single_mode needs a nonzero wavevector".into(),
        ));
    }
    let l = spec.lengths();
    let k: [f64; 3] = std::array::from_fn(|a| mode[a] as f64 * 2.0 * std::f64::consts::PI / l[a]);
    let axis = if mode[0] == 0 && mode[1] == 0 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let d = [
        k[1] * axis[2] - k[2] * axis[1],
        k[2] * axis[0] - k[0] * axis[2],
        k[0] * axis[1] - k[1] * axis[0],
    ];
    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let d = d.map(|v| v / norm);
    Ok(VectorField::from_fn(spec, |p| {
        let c = amplitude * (k[0] * p[0] + k[1] * p[1] + k[2] * p[2]).cos();
        [d[0] * c, d[1] * c, d[2] * c]
    }))
}

/// Named initial vorticity fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowPreset {
    Abc {
        #[serde(default = "one")]
        a: f64,
        #[serde(default = "one")]
        b: f64,
        #[serde(default = "one")]
        c: f64,
    },
    TaylorGreen3d,
    TaylorGreen2d,
    Random {
        kmax: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Zero,
}

fn one() -> f64 {
    1.0
}

impl FlowPreset {
    /// Vorticity of the preset; `seed_override` replaces the random seed when given.
    pub fn vorticity(&self, spec: GridSpec, seed_override: Option<u64>) -> Result<VectorField> {
        Ok(match *self {
            FlowPreset::Abc { a, b, c } => abc(spec, a, b, c),
            FlowPreset::TaylorGreen3d => taylor_green_3d_vorticity(spec),
            FlowPreset::TaylorGreen2d => taylor_green_2d_vorticity(spec),
            FlowPreset::Random {
                kmax,
                seed,
                amplitude,
            } => {
                random_band_limited_vorticity(spec, kmax, seed_override.unwrap_or(seed), amplitude)?
            }
            FlowPreset::Zero => VectorField::zeros(spec),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{curl, divergence};
    use std::f64::consts::PI;

    #[test]
    fn closed_form_vorticities_match_spectral_curl() {
        let spec = GridSpec::periodic_cube(16, 2.0 * PI).unwrap();
        let tg = curl(&taylor_green_3d_velocity(spec)).unwrap();
        assert!(tg.sub(&taylor_green_3d_vorticity(spec)).unwrap().max_abs() < 1e-12);
        let tg2 = curl(&taylor_green_2d_velocity(spec)).unwrap();
        assert!(tg2.sub(&taylor_green_2d_vorticity(spec)).unwrap().max_abs() < 1e-12);
        let u = abc(spec, 1.0, 0.7, 0.3);
        assert!(curl(&u).unwrap().sub(&u).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn random_field_is_reproducible_and_solenoidal() {
        let spec = GridSpec::periodic_cube(16, 2.0 * PI).unwrap();
        let a = random_band_limited_vorticity(spec, 3, 7, 2.0).unwrap();
        let b = random_band_limited_vorticity(spec, 3, 7, 2.0).unwrap();
        assert!(a == b);
        assert!((a.max_abs() - 2.0).abs() < 1e-14);
        assert!(divergence(&a).unwrap().max_abs() < 1e-12);
        let c = random_band_limited_vorticity(spec, 3, 8, 2.0).unwrap();
        assert!(a != c);
    }

    #[test]
    fn single_mode_is_solenoidal() {
        let spec = GridSpec::periodic_cube(16, 2.0 * PI).unwrap();
        for mode in [[1, 0, 0], [0, 0, 2], [1, -2, 3]] {
            let w = single_mode(spec, mode, 0.5).unwrap();
            if mode != [1, -2, 3] {
                assert!((w.max_abs() - 0.5).abs() < 1e-12);
            }
            assert!(divergence(&w).unwrap().max_abs() < 1e-12);
        }
        assert!(single_mode(spec, [0, 0, 0], 1.0).is_err());
    }
}
