//! Differential operators and volume quadrature on [`GridSpec`] fields.
//!
//! Periodic grids use exact spectral derivatives. Other domain kinds use
//! fourth-order central differences with fourth-order one-sided closures at
//! the two nodes nearest each face.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::spectral::Spectral;
use crate::summation;

fn check_spec(spec: &GridSpec) -> Result<()> {
    spec.validate()?;
    if !spec.is_periodic() {
        for (axis, n) in [('x', spec.nx), ('y', spec.ny), ('z', spec.nz)] {
            // The one-sided closure needs five nodes.
            if n < 5 {
                return Err(Error::GridTooSmall { axis, n });
            }
        }
    }
    Ok(())
}

/// Fourth-order finite-difference derivative along `axis` of samples on a non-periodic grid.
pub fn stencil_derivative(values: &[f64], spec: &GridSpec, axis: usize) -> Vec<f64> {
    let n = spec.dims()[axis];
    let h = spec.spacing()[axis];
    let stride = match axis {
        0 => 1,
        1 => spec.nx,
        _ => spec.nx * spec.ny,
    };
    let inv = 1.0 / (12.0 * h);
    (0..spec.len())
        .into_par_iter()
        .map(|idx| {
            let pos = spec.unravel(idx)[axis];
            let base = idx - pos * stride;
            let f = |m: usize| values[base + m * stride];
            let d = if pos == 0 {
                -25.0 * f(0) + 48.0 * f(1) - 36.0 * f(2) + 16.0 * f(3) - 3.0 * f(4)
            } else if pos == 1 {
                -3.0 * f(0) - 10.0 * f(1) + 18.0 * f(2) - 6.0 * f(3) + f(4)
            } else if pos == n - 2 {
                3.0 * f(n - 1) + 10.0 * f(n - 2) - 18.0 * f(n - 3) + 6.0 * f(n - 4) - f(n - 5)
            } else if pos == n - 1 {
                25.0 * f(n - 1) - 48.0 * f(n - 2) + 36.0 * f(n - 3) - 16.0 * f(n - 4)
                    + 3.0 * f(n - 5)
            } else {
                f(pos - 2) - 8.0 * f(pos - 1) + 8.0 * f(pos + 1) - f(pos + 2)
            };
            d * inv
        })
        .collect()
}

/// Derivative machinery for one grid: spectral or stencil.
pub enum Differentiator {
    Spectral(Box<Spectral>),
    Stencil(GridSpec),
}

impl Differentiator {
    pub fn new(spec: &GridSpec) -> Result<Self> {
        check_spec(spec)?;
        if spec.is_periodic() {
            Ok(Differentiator::Spectral(Box::new(Spectral::new(*spec)?)))
        } else {
            Ok(Differentiator::Stencil(*spec))
        }
    }

    /// All three first derivatives of one scalar sample array.
    pub fn gradient_of(&self, values: &[f64]) -> [Vec<f64>; 3] {
        match self {
            Differentiator::Spectral(sp) => {
                let c = sp.forward(values);
                [0, 1, 2].map(|a| sp.inverse(&sp.derivative(&c, a)))
            }
            Differentiator::Stencil(spec) => [0, 1, 2].map(|a| stencil_derivative(values, spec, a)),
        }
    }

    /// Selected first derivatives, avoiding the unneeded ones.
    pub fn partial(&self, values: &[f64], axis: usize) -> Vec<f64> {
        match self {
            Differentiator::Spectral(sp) => sp.inverse(&sp.derivative(&sp.forward(values), axis)),
            Differentiator::Stencil(spec) => stencil_derivative(values, spec, axis),
        }
    }

    /// Full Jacobian `J[i][j] = d v_i / d x_j`.
    pub fn jacobian(&self, v: &VectorField) -> [[Vec<f64>; 3]; 3] {
        [0, 1, 2].map(|i| self.gradient_of(&v.components[i]))
    }
}

/// Curl of a vector field.
pub fn curl(v: &VectorField) -> Result<VectorField> {
    v.check_finite("curl input")?;
    let d = Differentiator::new(&v.spec)?;
    let c = &v.components;
    let comps = match &d {
        Differentiator::Spectral(sp) => {
            let h: Vec<Vec<Complex64>> = c.iter().map(|x| sp.forward(x)).collect();
            let pair = |i: usize, a: usize, j: usize, b: usize| -> Vec<f64> {
                let mut out = sp.derivative(&h[i], a);
                let other = sp.derivative(&h[j], b);
                out.par_iter_mut()
                    .zip(other.par_iter())
                    .for_each(|(o, q)| *o -= *q);
                sp.inverse(&out)
            };
            [pair(2, 1, 1, 2), pair(0, 2, 2, 0), pair(1, 0, 0, 1)]
        }
        Differentiator::Stencil(_) => {
            let pair = |i: usize, a: usize, j: usize, b: usize| -> Vec<f64> {
                let p = d.partial(&c[i], a);
                let q = d.partial(&c[j], b);
                p.iter().zip(&q).map(|(x, y)| x - y).collect()
            };
            [pair(2, 1, 1, 2), pair(0, 2, 2, 0), pair(1, 0, 0, 1)]
        }
    };
    Ok(VectorField {
        spec: v.spec,
        components: comps,
    })
}

/// Divergence of a vector field.
pub fn divergence(v: &VectorField) -> Result<ScalarField> {
    v.check_finite("divergence input")?;
    let d = Differentiator::new(&v.spec)?;
    let values = match &d {
        Differentiator::Spectral(sp) => {
            let mut acc = vec![Complex64::new(0.0, 0.0); sp.spectral_len()];
            for axis in 0..3 {
                let dc = sp.derivative(&sp.forward(&v.components[axis]), axis);
                acc.par_iter_mut()
                    .zip(dc.par_iter())
                    .for_each(|(a, b)| *a += *b);
            }
            sp.inverse(&acc)
        }
        Differentiator::Stencil(_) => {
            let parts: Vec<Vec<f64>> = (0..3).map(|a| d.partial(&v.components[a], a)).collect();
            (0..v.spec.len())
                .map(|i| parts[0][i] + parts[1][i] + parts[2][i])
                .collect()
        }
    };
    Ok(ScalarField {
        spec: v.spec,
        values,
    })
}

/// Gradient of a scalar field.
pub fn gradient(s: &ScalarField) -> Result<VectorField> {
    s.check_finite("gradient input")?;
    let d = Differentiator::new(&s.spec)?;
    Ok(VectorField {
        spec: s.spec,
        components: d.gradient_of(&s.values),
    })
}

/// Spectral Laplacian on a periodic grid.
pub fn laplacian(s: &ScalarField) -> Result<ScalarField> {
    let sp = Spectral::new(s.spec)?;
    let c = sp.forward(&s.values);
    let lap: Vec<Complex64> = c
        .par_iter()
        .enumerate()
        .map(|(idx, &v)| {
            let k = sp.wavenumber(idx);
            -(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) * v
        })
        .collect();
    ScalarField::from_values(s.spec, sp.inverse(&lap))
}

/// Relative tolerance on the mean of a periodic Poisson right-hand side.
pub const SOLVABILITY_TOL: f64 = 1e-10;

/// Solves `laplacian(s) = rhs` on the torus for the zero-mean `s`.
pub fn poisson_solve_periodic(rhs: &ScalarField) -> Result<ScalarField> {
    if !rhs.spec.is_periodic() {
        return Err(Error::WrongDomain {
            expected: "Periodic",
            got: format!("{:?}", rhs.spec.domain_kind),
        });
    }
    rhs.check_finite("poisson rhs")?;
    let sp = Spectral::new(rhs.spec)?;
    poisson_solve_with(&sp, rhs)
}

pub(crate) fn poisson_solve_with(sp: &Spectral, rhs: &ScalarField) -> Result<ScalarField> {
    let mean = rhs.mean();
    let tol = SOLVABILITY_TOL * rhs.max_abs();
    if mean.abs() > tol {
        return Err(Error::NotSolvable { mean, tol });
    }
    let c = sp.forward(&rhs.values);
    let sol: Vec<Complex64> = c
        .par_iter()
        .enumerate()
        .map(|(idx, &v)| {
            let k = sp.wavenumber(idx);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                -v / k2
            }
        })
        .collect();
    ScalarField::from_values(rhs.spec, sp.inverse(&sol))
}

/// Integral over the grid's domain: rectangle rule on the torus, composite trapezoid otherwise.
pub fn volume_integral(s: &ScalarField) -> Result<f64> {
    s.check_finite("volume_integral input")?;
    let spec = s.spec;
    if spec.is_periodic() {
        let h = spec.spacing();
        return Ok(summation::sum_slice(&s.values) * h[0] * h[1] * h[2]);
    }
    let w = [spec.weights_1d(0), spec.weights_1d(1), spec.weights_1d(2)];
    Ok(summation::deterministic_sum(spec.len(), |idx| {
        let [i, j, k] = spec.unravel(idx);
        w[0][i] * w[1][j] * w[2][k] * s.values[idx]
    }))
}

/// `(a . grad) b` for vector fields on a shared grid.
pub fn advect(a: &VectorField, b: &VectorField) -> Result<VectorField> {
    if a.spec != b.spec {
        return Err(Error::GridMismatch);
    }
    let d = Differentiator::new(&b.spec)?;
    let jac = d.jacobian(b);
    let n = a.spec.len();
    let mut out = VectorField::zeros(a.spec);
    for i in 0..3 {
        out.components[i] = (0..n)
            .into_par_iter()
            .map(|p| {
                a.components[0][p] * jac[i][0][p]
                    + a.components[1][p] * jac[i][1][p]
                    + a.components[2][p] * jac[i][2][p]
            })
            .collect();
    }
    Ok(out)
}
