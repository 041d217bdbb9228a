//! Fourier representation of periodic fields.
//!
//! Wavenumbers along each axis are `(2 pi / l) * m` with integer `m` in
//! `-n/2 + 1 ..= n/2`. First derivatives treat the Nyquist index as having
//! zero wavenumber (its sine part is not representable on the grid); second
//! derivatives use the full `-k^2`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::RealFft3;
use crate::grid::{GridSpec, ScalarField, VectorField};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Half-spectrum coefficients of a periodic scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub spec: GridSpec,
    pub coefficients: Vec<Complex64>,
}

/// Half-spectrum coefficients of the three components of a periodic vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVectorField {
    pub spec: GridSpec,
    pub coefficients: [Vec<Complex64>; 3],
}

impl SpectralVectorField {
    pub fn zeros(spec: GridSpec) -> Self {
        let n = (spec.nx / 2 + 1) * spec.ny * spec.nz;
        SpectralVectorField {
            spec,
            coefficients: [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]],
        }
    }
}

/// FFT plans and wavenumber tables for one periodic grid.
#[derive(Debug, Clone)]
pub struct Spectral {
    spec: GridSpec,
    fft: RealFft3,
    dims: [usize; 3],
    k: [Vec<f64>; 3],
    keep: [Vec<bool>; 3],
    dk_flat: Vec<[f64; 3]>,
}

impl Spectral {
    pub fn new(spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        if !spec.is_periodic() {
            return Err(Error::WrongDomain {
                expected: "Periodic",
                got: format!("{:?}", spec.domain_kind),
            });
        }
        let n = spec.dims();
        let l = spec.lengths();
        let dims = [n[0] / 2 + 1, n[1], n[2]];
        let mut k: [Vec<f64>; 3] = Default::default();
        let mut dk: [Vec<f64>; 3] = Default::default();
        let mut keep: [Vec<bool>; 3] = Default::default();
        for axis in 0..3 {
            let scale = 2.0 * std::f64::consts::PI / l[axis];
            let cutoff = n[axis] as f64 / 3.0;
            for idx in 0..dims[axis] {
                let m = signed_index(idx, n[axis]);
                k[axis].push(scale * m as f64);
                let nyquist = (m.unsigned_abs() as usize) * 2 == n[axis];
                dk[axis].push(if nyquist { 0.0 } else { scale * m as f64 });
                keep[axis].push((m.abs() as f64) <= cutoff);
            }
        }
        let mut dk_flat = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for c in 0..dims[2] {
            for b in 0..dims[1] {
                for a in 0..dims[0] {
                    dk_flat.push([dk[0][a], dk[1][b], dk[2][c]]);
                }
            }
        }
        Ok(Spectral {
            spec,
            fft: RealFft3::new(n[0], n[1], n[2]),
            dims,
            k,
            keep,
            dk_flat,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn fft(&self) -> &RealFft3 {
        &self.fft
    }

    pub fn spectral_len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    fn unravel(&self, idx: usize) -> [usize; 3] {
        let a = idx % self.dims[0];
        let b = (idx / self.dims[0]) % self.dims[1];
        let c = idx / (self.dims[0] * self.dims[1]);
        [a, b, c]
    }

    /// Physical wavenumber vector of mode `idx`.
    #[inline]
    pub fn wavenumber(&self, idx: usize) -> [f64; 3] {
        let [a, b, c] = self.unravel(idx);
        [self.k[0][a], self.k[1][b], self.k[2][c]]
    }

    /// Wavenumber used by first derivatives (Nyquist components zeroed).
    #[inline]
    pub fn derivative_wavenumber(&self, idx: usize) -> [f64; 3] {
        self.dk_flat[idx]
    }

    /// Whether mode `idx` survives the 2/3-rule truncation.
    #[inline]
    pub fn retained(&self, idx: usize) -> bool {
        let [a, b, c] = self.unravel(idx);
        self.keep[0][a] && self.keep[1][b] && self.keep[2][c]
    }

    /// Mode band kept by the 2/3 rule, in the form accepted by the banded FFT calls.
    pub fn band(&self) -> [usize; 3] {
        [self.spec.nx / 3, self.spec.ny / 3, self.spec.nz / 3]
    }

    /// Weight of mode `idx` in Parseval sums over the half spectrum.
    #[inline]
    pub fn parseval_weight(&self, idx: usize) -> f64 {
        let a = idx % self.dims[0];
        let nx = self.spec.nx;
        if a == 0 || 2 * a == nx {
            1.0
        } else {
            2.0
        }
    }

    /// Signed integer mode indices of `idx`.
    pub fn mode_index(&self, idx: usize) -> [i64; 3] {
        let [a, b, c] = self.unravel(idx);
        let n = self.spec.dims();
        [
            signed_index(a, n[0]),
            signed_index(b, n[1]),
            signed_index(c, n[2]),
        ]
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        self.fft.forward_alloc(values)
    }

    pub fn inverse(&self, coefficients: &[Complex64]) -> Vec<f64> {
        self.fft.inverse_alloc(coefficients)
    }

    pub fn transform_scalar(&self, s: &ScalarField) -> Result<SpectralField> {
        self.check(&s.spec)?;
        Ok(SpectralField {
            spec: s.spec,
            coefficients: self.forward(&s.values),
        })
    }

    pub fn inverse_scalar(&self, s: &SpectralField) -> Result<ScalarField> {
        self.check(&s.spec)?;
        ScalarField::from_values(s.spec, self.inverse(&s.coefficients))
    }

    pub fn transform(&self, v: &VectorField) -> Result<SpectralVectorField> {
        self.check(&v.spec)?;
        Ok(SpectralVectorField {
            spec: v.spec,
            coefficients: [
                self.forward(&v.components[0]),
                self.forward(&v.components[1]),
                self.forward(&v.components[2]),
            ],
        })
    }

    pub fn inverse_vector(&self, v: &SpectralVectorField) -> Result<VectorField> {
        self.check(&v.spec)?;
        Ok(VectorField {
            spec: v.spec,
            components: [
                self.inverse(&v.coefficients[0]),
                self.inverse(&v.coefficients[1]),
                self.inverse(&v.coefficients[2]),
            ],
        })
    }

    fn check(&self, spec: &GridSpec) -> Result<()> {
        if spec != &self.spec {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Spectral derivative `d/dx_axis` of a coefficient array.
    pub fn derivative(&self, coeffs: &[Complex64], axis: usize) -> Vec<Complex64> {
        coeffs
            .par_iter()
            .enumerate()
            .map(|(idx, &c)| I * self.derivative_wavenumber(idx)[axis] * c)
            .collect()
    }

    /// Mixed derivative `d^|alpha| / dx^alpha` for a multi-index.
    pub fn multi_derivative(&self, coeffs: &[Complex64], alpha: [u32; 3]) -> Vec<Complex64> {
        coeffs
            .par_iter()
            .enumerate()
            .map(|(idx, &c)| {
                let dk = self.derivative_wavenumber(idx);
                let mut factor = Complex64::new(1.0, 0.0);
                for axis in 0..3 {
                    for _ in 0..alpha[axis] {
                        factor *= I * dk[axis];
                    }
                }
                factor * c
            })
            .collect()
    }

    /// Zeroes every coefficient outside the 2/3-rule band.
    pub fn truncate_in_place(&self, coeffs: &mut [Complex64]) {
        coeffs.par_iter_mut().enumerate().for_each(|(idx, c)| {
            if !self.retained(idx) {
                *c = ZERO;
            }
        });
    }

    /// 2/3-rule dealiasing: coefficients with `|m_i| > n_i / 3` on any axis are zeroed.
    pub fn dealias(&self, f: &SpectralVectorField) -> Result<SpectralVectorField> {
        self.check(&f.spec)?;
        let mut out = f.clone();
        for c in out.coefficients.iter_mut() {
            self.truncate_in_place(c);
        }
        Ok(out)
    }

    /// Projects onto mean-free, divergence-free fields:
    /// `c - k (k . c) / |k|^2`, with modes of vanishing derivative wavenumber removed.
    pub fn project_solenoidal(&self, f: &mut SpectralVectorField) {
        let [cx, cy, cz] = &mut f.coefficients;
        cx.par_iter_mut()
            .zip(cy.par_iter_mut())
            .zip(cz.par_iter_mut())
            .enumerate()
            .for_each(|(idx, ((x, y), z))| {
                let k = self.derivative_wavenumber(idx);
                let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
                if k2 == 0.0 {
                    *x = ZERO;
                    *y = ZERO;
                    *z = ZERO;
                } else {
                    let dot = (*x * k[0] + *y * k[1] + *z * k[2]) / k2;
                    *x -= dot * k[0];
                    *y -= dot * k[1];
                    *z -= dot * k[2];
                }
            });
    }

    /// Sum of `|c|^2` over the full spectrum for the three components, optionally restricted.
    pub fn energy_sum(
        &self,
        f: &SpectralVectorField,
        select: impl Fn(usize) -> bool + Sync,
    ) -> f64 {
        crate::summation::deterministic_sum(self.spectral_len(), |idx| {
            if !select(idx) {
                return 0.0;
            }
            let w = self.parseval_weight(idx);
            w * f
                .coefficients
                .iter()
                .map(|c| c[idx].norm_sqr())
                .sum::<f64>()
        })
    }
}

#[inline]
fn signed_index(idx: usize, n: usize) -> i64 {
    if idx <= n / 2 {
        idx as i64
    } else {
        idx as i64 - n as i64
    }
}

/// Free-function form of [`Spectral::dealias`].
pub fn dealias(f: &SpectralVectorField) -> Result<SpectralVectorField> {
    Spectral::new(f.spec)?.dealias(f)
}
