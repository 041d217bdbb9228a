//! Space-time mollification with a smooth bump on the unit 4-ball.
//!
//! The kernel is `phi(x / delta, t / delta) / delta^4` with
//! `phi(s) = exp(-1 / (1 - |s|^2))` for `|s| < 1`. Discrete kernels are
//! sampled on the lattice of the data and renormalized to unit sum, so
//! constants and means are reproduced to rounding.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::RealFft3;
use crate::grid::{GridSpec, VectorField};
use crate::summation::NeumaierSum;

/// Lattice points per kernel radius used by [`kernel_moment`].
pub const MOMENT_LATTICE: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpKernel {
    pub delta: f64,
}

/// Sampled kernel: offsets `(i, j, k, n)` in lattice units and weights summing to one.
#[derive(Debug, Clone)]
pub struct DiscreteKernel {
    pub half_width: [usize; 4],
    pub taps: Vec<([i64; 4], f64)>,
}

impl BumpKernel {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::BadParam(format!(
                "mollifier delta must be positive and finite, got {delta}"
            )));
        }
        Ok(BumpKernel { delta })
    }

    /// Unnormalized profile as a function of `|s|^2`.
    #[inline]
    pub fn profile(s2: f64) -> f64 {
        if s2 < 1.0 {
            (-1.0 / (1.0 - s2)).exp()
        } else {
            0.0
        }
    }

    /// Samples the kernel on a lattice with spatial spacings `h` and time spacing `dt`.
    /// A zero `dt` collapses the time direction to the single slice `t' = 0`.
    pub fn discrete(&self, h: [f64; 3], dt: f64) -> DiscreteKernel {
        let hw = |s: f64| {
            if s > 0.0 {
                (self.delta / s).floor() as usize
            } else {
                0
            }
        };
        let half_width = [hw(h[0]), hw(h[1]), hw(h[2]), hw(dt)];
        let mut raw = Vec::new();
        let r = half_width.map(|w| w as i64);
        for n in -r[3]..=r[3] {
            for k in -r[2]..=r[2] {
                for j in -r[1]..=r[1] {
                    for i in -r[0]..=r[0] {
                        let s = [
                            i as f64 * h[0] / self.delta,
                            j as f64 * h[1] / self.delta,
                            k as f64 * h[2] / self.delta,
                            n as f64 * dt / self.delta,
                        ];
                        let w = Self::profile(s.iter().map(|v| v * v).sum());
                        if w > 0.0 {
                            raw.push(([i, j, k, n], w));
                        }
                    }
                }
            }
        }
        let total: NeumaierSum = raw.iter().map(|t| t.1).collect();
        let total = total.value();
        let taps = raw.into_iter().map(|(o, w)| (o, w / total)).collect();
        DiscreteKernel { half_width, taps }
    }
}

/// Moment `sum phi_delta(x', t') (x'_axis)^order` of the kernel sampled with
/// [`MOMENT_LATTICE`] points per radius and normalized to unit lattice sum.
/// Axis 3 is time.
pub fn kernel_moment(k: &BumpKernel, axis: usize, order: u32) -> f64 {
    assert!(axis < 4, "axis must be 0..4");
    let m = MOMENT_LATTICE as i64;
    let h = 1.0 / MOMENT_LATTICE as f64;
    let parts: Vec<(f64, f64)> = (-m..=m)
        .into_par_iter()
        .map(|a| {
            let mut acc = NeumaierSum::new();
            let mut mass = NeumaierSum::new();
            for b in -m..=m {
                for c in -m..=m {
                    for d in -m..=m {
                        let s = [a, b, c, d].map(|v| v as f64 * h);
                        let w = BumpKernel::profile(s.iter().map(|v| v * v).sum());
                        if w > 0.0 {
                            acc.add(w * s[axis].powi(order as i32));
                            mass.add(w);
                        }
                    }
                }
            }
            (acc.value(), mass.value())
        })
        .collect();
    let sum: NeumaierSum = parts.iter().map(|p| p.0).collect();
    let mass: NeumaierSum = parts.iter().map(|p| p.1).collect();
    sum.value() / mass.value() * k.delta.powi(order as i32)
}

/// Vorticity snapshots at uniformly spaced times on one grid.
#[derive(Debug, Clone)]
pub struct SnapshotSequence {
    pub times: Vec<f64>,
    pub fields: Vec<VectorField>,
}

impl SnapshotSequence {
    pub fn new(times: Vec<f64>, fields: Vec<VectorField>) -> Result<Self> {
        let s = SnapshotSequence { times, fields };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.fields.len() || self.times.is_empty() {
            return Err(Error::BadParam(
                "snapshot times and fields must be non-empty and of equal length".into(),
            ));
        }
        let spec = self.fields[0].spec;
        if self.fields.iter().any(|f| f.spec != spec) {
            return Err(Error::GridMismatch);
        }
        if self.times.len() > 1 {
            let dt = self.times[1] - self.times[0];
            if !(dt > 0.0) {
                return Err(Error::BadParam(
                    "snapshot times must be strictly increasing".into(),
                ));
            }
            for w in self.times.windows(2) {
                if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
                    return Err(Error::BadParam(
                        "snapshot times must be uniformly spaced".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        }
    }
}

/// Space-time mollification of the snapshot at `t_index`.
///
/// Periodic grids wrap in space and return a field on the same grid. Other
/// grids return the field on the interior sub-grid where the kernel fits.
pub fn mollify(seq: &SnapshotSequence, k: &BumpKernel, t_index: usize) -> Result<VectorField> {
    seq.validate()?;
    for f in &seq.fields {
        f.check_finite("snapshot")?;
    }
    let spec = seq.fields[0].spec;
    let len = seq.times.len();
    if t_index >= len {
        return Err(Error::InsufficientHistory {
            needed: t_index + 1,
            have: len,
        });
    }
    if len == 1 && k.delta > 0.0 {
        // Without a second time the kernel's time extent is unknown.
        return Err(Error::InsufficientHistory { needed: 2, have: 1 });
    }
    let dk = k.discrete(spec.spacing(), seq.dt());
    let nt = dk.half_width[3];
    if t_index < nt || t_index + nt >= len {
        return Err(Error::InsufficientHistory {
            needed: 2 * nt + 1,
            have: len,
        });
    }
    if spec.is_periodic() {
        mollify_periodic(seq, &dk, t_index)
    } else {
        mollify_interior(seq, &dk, t_index)
    }
}

/// Transform (unscaled) of the spatial slices of a kernel, periodized onto `spec`.
/// Returns one real multiplier array per time offset `-nt..=nt`.
fn slice_multipliers(spec: &GridSpec, dk: &DiscreteKernel, marginal: bool) -> Vec<Vec<f64>> {
    let n = spec.dims();
    let fft = RealFft3::new(n[0], n[1], n[2]);
    let nt = dk.half_width[3] as i64;
    let slices: Vec<i64> = if marginal {
        vec![0]
    } else {
        (-nt..=nt).collect()
    };
    slices
        .iter()
        .map(|&s| {
            let mut real = vec![0.0; spec.len()];
            for (o, w) in &dk.taps {
                if !marginal && o[3] != s {
                    continue;
                }
                let idx = [0, 1, 2].map(|a| o[a].rem_euclid(n[a] as i64) as usize);
                real[spec.index(idx[0], idx[1], idx[2])] += w;
            }
            let scale = spec.len() as f64;
            fft.forward_alloc(&real)
                .into_iter()
                .map(|c| c.re * scale)
                .collect()
        })
        .collect()
}

fn mollify_periodic(
    seq: &SnapshotSequence,
    dk: &DiscreteKernel,
    t_index: usize,
) -> Result<VectorField> {
    let spec = seq.fields[0].spec;
    let n = spec.dims();
    let fft = RealFft3::new(n[0], n[1], n[2]);
    let mult = slice_multipliers(&spec, dk, false);
    let nt = dk.half_width[3];
    let mut out = VectorField::zeros(spec);
    for c in 0..3 {
        let mut acc = vec![Complex64::new(0.0, 0.0); fft.spectral_len()];
        for (s, m) in mult.iter().enumerate() {
            // Offset n = s - nt reads the snapshot at t_index - n.
            let src = &seq.fields[t_index + nt - s].components[c];
            let f = fft.forward_alloc(src);
            acc.par_iter_mut()
                .zip(f.par_iter())
                .zip(m.par_iter())
                .for_each(|((a, v), w)| *a += v * *w);
        }
        out.components[c] = fft.inverse_alloc(&acc);
    }
    Ok(out)
}

fn mollify_interior(
    seq: &SnapshotSequence,
    dk: &DiscreteKernel,
    t_index: usize,
) -> Result<VectorField> {
    let spec = seq.fields[0].spec;
    let n = spec.dims();
    let m = [dk.half_width[0], dk.half_width[1], dk.half_width[2]];
    if (0..3).any(|a| n[a] < 2 * m[a] + 4) {
        return Err(Error::MarginViolation);
    }
    let h = spec.spacing();
    let inner = [n[0] - 2 * m[0], n[1] - 2 * m[1], n[2] - 2 * m[2]];
    let origin = [0, 1, 2].map(|a| spec.origin[a] + m[a] as f64 * h[a]);
    let lengths = [0, 1, 2].map(|a| (inner[a] - 1) as f64 * h[a]);
    let sub = GridSpec::with_origin(inner, lengths, origin, spec.domain_kind)?;
    let mut out = VectorField::zeros(sub);
    for c in 0..3 {
        out.components[c] = (0..sub.len())
            .into_par_iter()
            .map(|idx| {
                let [i, j, k] = sub.unravel(idx);
                let base = [i + m[0], j + m[1], k + m[2]];
                let mut acc = NeumaierSum::new();
                for (o, w) in &dk.taps {
                    let p = [0, 1, 2].map(|a| (base[a] as i64 - o[a]) as usize);
                    let snap = (t_index as i64 - o[3]) as usize;
                    acc.add(w * seq.fields[snap].components[c][spec.index(p[0], p[1], p[2])]);
                }
                acc.value()
            })
            .collect();
    }
    Ok(out)
}

/// Fourier multiplier of the time-marginalized kernel on a periodic grid, for a
/// time lattice of spacing `dt`. Applying it to a field equals mollifying a
/// sequence in which that field is frozen over the kernel's time window.
pub fn spatial_multiplier(spec: &GridSpec, k: &BumpKernel, dt: f64) -> Result<Vec<f64>> {
    if !spec.is_periodic() {
        return Err(Error::WrongDomain {
            expected: "Periodic",
            got: format!("{:?}", spec.domain_kind),
        });
    }
    let dk = k.discrete(spec.spacing(), dt);
    Ok(slice_multipliers(spec, &dk, true).remove(0))
}
