//! Velocity from vorticity on the four supported geometries.
//!
//! * torus: spectral inversion of `laplacian(u) = -curl(w)`;
//! * whole space: Biot–Savart quadrature with the singular node excluded;
//! * half space `z >= 0`: image Green's function plus the two wall-data integrals;
//! * Dirichlet box: triple sine series of the Green's function.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DomainKind, GridSpec, VectorField};
use crate::operators;
use crate::spectral::Spectral;
use crate::summation::NeumaierSum;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

// ---------------------------------------------------------------------------
// Torus

/// Solenoidal, mean-free velocity whose curl is the solenoidal part of `w`.
pub fn velocity_from_vorticity_periodic(w: &VectorField) -> Result<VectorField> {
    w.check_finite("vorticity")?;
    let sp = Spectral::new(w.spec)?;
    let w_hat = sp.transform(w)?;
    let mut u_hat = [
        vec![ZERO; sp.spectral_len()],
        vec![ZERO; sp.spectral_len()],
        vec![ZERO; sp.spectral_len()],
    ];
    velocity_coefficients(&sp, &w_hat.coefficients, &mut u_hat);
    Ok(VectorField {
        spec: w.spec,
        components: u_hat.map(|c| sp.inverse(&c)),
    })
}

/// `u_hat = i k x w_hat / |k|^2` with derivative wavenumbers; modes with `k = 0` are dropped.
pub fn velocity_coefficients(sp: &Spectral, w: &[Vec<Complex64>; 3], u: &mut [Vec<Complex64>; 3]) {
    let [ux, uy, uz] = u;
    ux.par_iter_mut()
        .zip(uy.par_iter_mut())
        .zip(uz.par_iter_mut())
        .enumerate()
        .for_each(|(idx, ((x, y), z))| {
            let k = sp.derivative_wavenumber(idx);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            if k2 == 0.0 {
                *x = ZERO;
                *y = ZERO;
                *z = ZERO;
                return;
            }
            let (a, b, c) = (w[0][idx], w[1][idx], w[2][idx]);
            let s = I / k2;
            *x = s * (b * -k[2] + c * k[1]);
            *y = s * (c * -k[0] + a * k[2]);
            *z = s * (a * -k[1] + b * k[0]);
        });
}

// ---------------------------------------------------------------------------
// Quadrature configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum QuadratureRule {
    Rectangle,
    #[default]
    Trapezoid,
}

/// How the curl source of a closed-form vorticity family is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum CurlSource {
    /// Closed-form derivatives of the family.
    #[default]
    Analytic,
    /// Fourth-order finite differences of the sampled vorticity.
    Stencil,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rule: QuadratureRule,
    /// Source nodes closer than this to the target are skipped; the coincident node always is.
    pub exclusion_radius: f64,
    /// Source nodes farther than this from the target are skipped. Also the half-width
    /// of the truncated half-space volume.
    pub truncation_radius: f64,
    /// Nodes per axis of the volume grid used by the half-space and box integrals.
    #[serde(default = "default_volume_nodes")]
    pub volume_nodes: usize,
    /// Nodes per axis of the wall grid used by the half-space boundary integrals.
    #[serde(default = "default_boundary_nodes")]
    pub boundary_nodes: usize,
    #[serde(default)]
    pub curl_source: CurlSource,
}

fn default_volume_nodes() -> usize {
    64
}

fn default_boundary_nodes() -> usize {
    801
}

impl QuadratureSpec {
    pub fn new(rule: QuadratureRule, exclusion_radius: f64, truncation_radius: f64) -> Self {
        QuadratureSpec {
            rule,
            exclusion_radius,
            truncation_radius,
            volume_nodes: default_volume_nodes(),
            boundary_nodes: default_boundary_nodes(),
            curl_source: CurlSource::Analytic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exclusion_radius >= 0.0 && self.exclusion_radius.is_finite()) {
            return Err(Error::BadParam(format!(
                "exclusion_radius must be finite and >= 0, got {}",
                self.exclusion_radius
            )));
        }
        if !(self.truncation_radius > 0.0) {
            return Err(Error::BadParam(format!(
                "truncation_radius must be > 0, got {}",
                self.truncation_radius
            )));
        }
        if self.volume_nodes < 5 {
            return Err(Error::BadParam(format!(
                "volume_nodes must be >= 5, got {}",
                self.volume_nodes
            )));
        }
        if self.boundary_nodes < 3 {
            return Err(Error::BadParam(format!(
                "boundary_nodes must be >= 3, got {}",
                self.boundary_nodes
            )));
        }
        Ok(())
    }

    /// Checks the exclusion radius against the spacing of the grid it is used on.
    pub fn validate_for(&self, spec: &GridSpec) -> Result<()> {
        self.validate()?;
        let limit = 4.0 * spec.min_spacing();
        if self.exclusion_radius >= limit {
            return Err(Error::BadParam(format!(
                "exclusion_radius {} must be below four grid spacings ({limit})",
                self.exclusion_radius
            )));
        }
        Ok(())
    }

    fn weights(&self, spec: &GridSpec, axis: usize) -> Vec<f64> {
        match self.rule {
            QuadratureRule::Trapezoid => spec.weights_1d(axis),
            QuadratureRule::Rectangle => vec![spec.spacing()[axis]; spec.dims()[axis]],
        }
    }
}

/// Product quadrature weight of every node of `spec`.
fn node_weights(q: &QuadratureSpec, spec: &GridSpec) -> Vec<f64> {
    let w = [q.weights(spec, 0), q.weights(spec, 1), q.weights(spec, 2)];
    (0..spec.len())
        .map(|idx| {
            let [i, j, k] = spec.unravel(idx);
            w[0][i] * w[1][j] * w[2][k]
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Whole space

/// Samples on the outer faces must not exceed this fraction of the peak.
pub const SUPPORT_TOL: f64 = 1e-10;

/// `u(x) = (1/4 pi) sum_y w(y) x (x - y) / |x - y|^3 * weight(y)`.
pub fn biot_savart_whole_space(
    w: &VectorField,
    q: &QuadratureSpec,
    targets: &[[f64; 3]],
) -> Result<Vec<[f64; 3]>> {
    let spec = w.spec;
    if spec.domain_kind != DomainKind::WholeSpaceTruncated {
        return Err(Error::WrongDomain {
            expected: "WholeSpaceTruncated",
            got: format!("{:?}", spec.domain_kind),
        });
    }
    spec.validate()?;
    q.validate_for(&spec)?;
    w.check_finite("vorticity")?;
    for t in targets {
        if !t.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "target point".into(),
            });
        }
    }

    let peak = w.max_norm();
    let tol = SUPPORT_TOL * peak;
    let boundary = boundary_max_norm(w);
    if boundary > tol {
        return Err(Error::SupportViolation { boundary, tol });
    }

    let weights = node_weights(q, &spec);
    let sources: Vec<([f64; 3], [f64; 3])> = (0..spec.len())
        .filter_map(|idx| {
            let v = w.at(idx);
            if v == [0.0; 3] {
                return None;
            }
            let c = weights[idx];
            Some((spec.point(idx), [v[0] * c, v[1] * c, v[2] * c]))
        })
        .collect();

    let excl2 = q.exclusion_radius * q.exclusion_radius;
    let trunc2 = q.truncation_radius * q.truncation_radius;
    let scale = 1.0 / (4.0 * PI);
    let out: Vec<[f64; 3]> = targets
        .par_iter()
        .map(|x| {
            let mut acc = [NeumaierSum::new(); 3];
            for (y, wv) in &sources {
                let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                if r2 == 0.0 || r2 <= excl2 || r2 > trunc2 {
                    continue;
                }
                let inv_r3 = 1.0 / (r2 * r2.sqrt());
                acc[0].add((wv[1] * d[2] - wv[2] * d[1]) * inv_r3);
                acc[1].add((wv[2] * d[0] - wv[0] * d[2]) * inv_r3);
                acc[2].add((wv[0] * d[1] - wv[1] * d[0]) * inv_r3);
            }
            [
                scale * acc[0].value(),
                scale * acc[1].value(),
                scale * acc[2].value(),
            ]
        })
        .collect();
    Ok(out)
}

fn boundary_max_norm(w: &VectorField) -> f64 {
    let spec = w.spec;
    let n = spec.dims();
    (0..spec.len())
        .filter(|&idx| {
            let p = spec.unravel(idx);
            (0..3).any(|a| p[a] == 0 || p[a] == n[a] - 1)
        })
        .map(|idx| {
            let v = w.at(idx);
            (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
        })
        .fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Half space

/// Parameters of the half-space vorticity family `gamma * (x, y, z + c) / r_c^3`
/// and its Gaussian wall data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Value of the time modulation at the evaluation time.
    pub gamma: f64,
}

impl HalfSpaceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::BadParam(format!(
                "c must be positive and finite, got {}",
                self.c
            )));
        }
        for (name, v) in [("a", self.a), ("b", self.b)] {
            if !v.is_finite() || v == 0.0 {
                return Err(Error::BadParam(format!(
                    "{name} must be finite and nonzero, got {v}"
                )));
            }
        }
        if !self.gamma.is_finite() {
            return Err(Error::NonFinite {
                context: "gamma".into(),
            });
        }
        Ok(())
    }

    pub fn vorticity(&self, p: [f64; 3]) -> [f64; 3] {
        let s = [p[0], p[1], p[2] + self.c];
        let r2 = s[0] * s[0] + s[1] * s[1] + s[2] * s[2];
        let f = self.gamma / (r2 * r2.sqrt());
        [f * s[0], f * s[1], f * s[2]]
    }

    /// Closed-form curl of [`Self::vorticity`].
    pub fn vorticity_curl(&self, p: [f64; 3]) -> [f64; 3] {
        radial_field_curl(self.gamma, [p[0], p[1], p[2] + self.c])
    }

    /// Wall profiles `(u0, v0) = (y, x) exp(-a^2 x^2 - b^2 y^2)`.
    pub fn wall_profiles(&self, x: f64, y: f64) -> (f64, f64) {
        let e = (-(self.a * self.a) * x * x - self.b * self.b * y * y).exp();
        (y * e, x * e)
    }

    /// Prescribed wall velocity `(2 pi b^2 u0, -2 pi a^2 v0, 0)`.
    pub fn wall_velocity(&self, x: f64, y: f64) -> [f64; 3] {
        let (u0, v0) = self.wall_profiles(x, y);
        [
            2.0 * PI * self.b * self.b * u0,
            -2.0 * PI * self.a * self.a * v0,
            0.0,
        ]
    }

    /// Half-width of the truncated wall integrals.
    pub fn wall_half_width(&self) -> f64 {
        8.0 / self.a.abs().min(self.b.abs())
    }
}

/// Curl of `gamma * s / |s|^3`, written so each pair of mixed terms is computed identically.
fn radial_field_curl(gamma: f64, s: [f64; 3]) -> [f64; 3] {
    let r2 = s[0] * s[0] + s[1] * s[1] + s[2] * s[2];
    let f = -3.0 * gamma / (r2 * r2 * r2.sqrt());
    // d_j (s_i / r^3) = delta_ij / r^3 - 3 s_i s_j / r^5; the mixed partials are symmetric.
    let d = |i: usize, j: usize| f * (s[i] * s[j]);
    [d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]
}

/// Image Green's function `G_c = (1/R- - 1/R+) / 4 pi` of the half space `z >= 0`.
pub fn halfspace_green(x: [f64; 3], xp: [f64; 3]) -> f64 {
    let dx = x[0] - xp[0];
    let dy = x[1] - xp[1];
    let h2 = dx * dx + dy * dy;
    let zm = x[2] - xp[2];
    let zp = x[2] + xp[2];
    let rm = (h2 + zm * zm).sqrt();
    let rp = (h2 + zp * zp).sqrt();
    (1.0 / rm - 1.0 / rp) / (4.0 * PI)
}

/// `z * integral over [x1,x2]x[y1,y2] of 1 / (X^2 + Y^2 + z^2)^{3/2}`, offsets relative to the target.
fn rectangle_solid_angle(x1: f64, x2: f64, y1: f64, y2: f64, z: f64) -> f64 {
    let f = |x: f64, y: f64| (x * y / (z * (x * x + y * y + z * z).sqrt())).atan();
    f(x2, y2) - f(x1, y2) - f(x2, y1) + f(x1, y1)
}

/// Velocity of the half-space family at `targets` (all with `z >= 0`).
///
/// The volume integrals of `G_c * curl(w)` are taken over `[-T, T]^2 x [0, T]`
/// with `T = q.truncation_radius`; the wall integrals over `[-W, W]^2` with
/// `W = 8 / min(|a|, |b|)`, the smooth part by quadrature and the `1/R^3`
/// singularity analytically. On the wall itself the integrals reduce to the
/// prescribed wall data.
pub fn halfspace_velocity(
    params: &HalfSpaceParams,
    q: &QuadratureSpec,
    targets: &[[f64; 3]],
) -> Result<Vec<[f64; 3]>> {
    params.validate()?;
    q.validate()?;
    for t in targets {
        if !t.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "target point".into(),
            });
        }
        if t[2] < 0.0 {
            return Err(Error::OutOfDomain { point: *t });
        }
    }

    let volume = halfspace_volume_terms(params, q, targets)?;

    let half = params.wall_half_width();
    let n = q.boundary_nodes;
    let h = 2.0 * half / (n - 1) as f64;
    let coords: Vec<f64> = (0..n).map(|i| -half + i as f64 * h).collect();
    let w1d: Vec<f64> = (0..n)
        .map(|i| match q.rule {
            QuadratureRule::Trapezoid if i == 0 || i == n - 1 => 0.5 * h,
            _ => h,
        })
        .collect();
    // (x', y', weight * u0, weight * v0, weight)
    let wall: Vec<(f64, f64, f64, f64, f64)> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx % n, idx / n);
            let (u0, v0) = params.wall_profiles(coords[i], coords[j]);
            let wt = w1d[i] * w1d[j];
            (coords[i], coords[j], u0 * wt, v0 * wt, wt)
        })
        .collect();

    let (a2, b2) = (params.a * params.a, params.b * params.b);
    let out = targets
        .par_iter()
        .zip(volume.par_iter())
        .map(|(x, vol)| {
            if x[2] == 0.0 {
                let wv = params.wall_velocity(x[0], x[1]);
                return [vol[0] + wv[0], vol[1] + wv[1], vol[2]];
            }
            let z = x[2];
            let (u0x, v0x) = params.wall_profiles(x[0], x[1]);
            let mut su = NeumaierSum::new();
            let mut sv = NeumaierSum::new();
            let mut sk = NeumaierSum::new();
            for &(xp, yp, wu, wv, wt) in &wall {
                let dx = xp - x[0];
                let dy = yp - x[1];
                let r2 = dx * dx + dy * dy + z * z;
                let k = z / (r2 * r2.sqrt());
                su.add(k * wu);
                sv.add(k * wv);
                sk.add(k * wt);
            }
            // Replace the quadrature of the kernel alone by its exact value: the
            // near-singular part of the integrand is then carried by (f - f(x)).
            let exact =
                rectangle_solid_angle(-half - x[0], half - x[0], -half - x[1], half - x[1], z);
            let correction = exact - sk.value();
            let iu = su.value() + u0x * correction;
            let iv = sv.value() + v0x * correction;
            [vol[0] + b2 * iu, vol[1] - a2 * iv, vol[2]]
        })
        .collect();
    Ok(out)
}

fn halfspace_volume_terms(
    params: &HalfSpaceParams,
    q: &QuadratureSpec,
    targets: &[[f64; 3]],
) -> Result<Vec<[f64; 3]>> {
    let t = q.truncation_radius;
    let spec = GridSpec::with_origin(
        [q.volume_nodes; 3],
        [2.0 * t, 2.0 * t, t],
        [-t, -t, 0.0],
        DomainKind::HalfSpaceTruncated,
    )?;
    q.validate_for(&spec)?;
    let source = match q.curl_source {
        CurlSource::Analytic => VectorField::from_fn(spec, |p| params.vorticity_curl(p)),
        CurlSource::Stencil => {
            operators::curl(&VectorField::from_fn(spec, |p| params.vorticity(p)))?
        }
    };
    source.check_finite("half-space curl source")?;
    green_volume_sum(&source, q, targets, halfspace_green)
}

/// `sum_y G(x, y) s(y) weight(y)` with the exclusion radius applied to `|x - y|`.
fn green_volume_sum(
    source: &VectorField,
    q: &QuadratureSpec,
    targets: &[[f64; 3]],
    green: impl Fn([f64; 3], [f64; 3]) -> f64 + Sync,
) -> Result<Vec<[f64; 3]>> {
    let spec = source.spec;
    let weights = node_weights(q, &spec);
    let nodes: Vec<([f64; 3], [f64; 3])> = (0..spec.len())
        .filter_map(|idx| {
            let s = source.at(idx);
            (s != [0.0; 3]).then(|| (spec.point(idx), s.map(|v| v * weights[idx])))
        })
        .collect();
    let excl2 = q.exclusion_radius * q.exclusion_radius;
    Ok(targets
        .par_iter()
        .map(|x| {
            let mut acc = [NeumaierSum::new(); 3];
            for (y, s) in &nodes {
                let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                if r2 == 0.0 || r2 <= excl2 {
                    continue;
                }
                let g = green(*x, *y);
                for c in 0..3 {
                    acc[c].add(g * s[c]);
                }
            }
            acc.map(|a| a.value())
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Box

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxGreenSpec {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub n_terms: usize,
    pub tol: f64,
}

impl BoxGreenSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("l1", self.l1), ("l2", self.l2), ("l3", self.l3)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::BadParam(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.n_terms < 1 {
            return Err(Error::BadParam("n_terms must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::BadParam(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }

    pub fn lengths(&self) -> [f64; 3] {
        [self.l1, self.l2, self.l3]
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| p[a] >= 0.0 && p[a] <= self.lengths()[a])
    }

    fn check_point(&self, p: [f64; 3]) -> Result<()> {
        if !self.contains(p) {
            return Err(Error::OutOfDomain { point: p });
        }
        Ok(())
    }

    fn prefactor(&self) -> f64 {
        8.0 / (PI * PI * self.l1 * self.l2 * self.l3)
    }

    /// `l^2/L1^2 + m^2/L2^2 + n^2/L3^2` for 1-based indices.
    fn eigen(&self, l: usize, m: usize, n: usize) -> f64 {
        let a = l as f64 / self.l1;
        let b = m as f64 / self.l2;
        let c = n as f64 / self.l3;
        a * a + b * b + c * c
    }
}

/// A truncated series value with the magnitude of its last retained shell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenValue {
    pub value: f64,
    /// Sum of absolute terms with `max(l, m, n) = n_terms`.
    pub tail_estimate: f64,
}

impl GreenValue {
    pub fn within_tol(&self, tol: f64) -> bool {
        self.tail_estimate <= tol
    }
}

/// `sin(pi t)`, exactly zero at every integer `t`.
pub fn sinpi(t: f64) -> f64 {
    let r = t - 2.0 * (t / 2.0).round();
    // r in [-1, 1]
    if r == 0.0 || r.abs() == 1.0 {
        return 0.0;
    }
    let (sign, r) = if r < 0.0 { (-1.0, -r) } else { (1.0, r) };
    let r = if r > 0.5 { 1.0 - r } else { r };
    sign * (PI * r).sin()
}

fn sine_table(n_terms: usize, t: f64) -> Vec<f64> {
    (1..=n_terms).map(|l| sinpi(l as f64 * t)).collect()
}

/// Truncated sine series of the Dirichlet Green's function of the box.
pub fn box_green(x: [f64; 3], xp: [f64; 3], spec: &BoxGreenSpec) -> Result<GreenValue> {
    spec.validate()?;
    spec.check_point(x)?;
    spec.check_point(xp)?;
    let l = spec.lengths();
    let n = spec.n_terms;
    let pair = |axis: usize| -> Vec<f64> {
        let a = sine_table(n, x[axis] / l[axis]);
        let b = sine_table(n, xp[axis] / l[axis]);
        a.iter().zip(&b).map(|(p, q)| p * q).collect()
    };
    let (sx, sy, sz) = (pair(0), pair(1), pair(2));
    Ok(sum_series(spec, |l, m, k| sx[l] * sy[m] * sz[k]))
}

/// `prefactor * sum_{l,m,n} coeff(l-1, m-1, n-1) / eigen(l, m, n)` with the last-shell tail.
fn sum_series(
    spec: &BoxGreenSpec,
    coeff: impl Fn(usize, usize, usize) -> f64 + Sync,
) -> GreenValue {
    let n = spec.n_terms;
    let parts: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut acc = NeumaierSum::new();
            let mut tail = NeumaierSum::new();
            for m in 0..n {
                for l in 0..n {
                    let term = coeff(l, m, k) / spec.eigen(l + 1, m + 1, k + 1);
                    acc.add(term);
                    if l == n - 1 || m == n - 1 || k == n - 1 {
                        tail.add(term.abs());
                    }
                }
            }
            (acc.value(), tail.value())
        })
        .collect();
    let value: NeumaierSum = parts.iter().map(|p| p.0).collect();
    let tail: NeumaierSum = parts.iter().map(|p| p.1).collect();
    let f = spec.prefactor();
    GreenValue {
        value: f * value.value(),
        tail_estimate: f * tail.value(),
    }
}

/// Sine coefficients of a sampled source, ready to be evaluated against the
/// box Green's function: `phi(x) = integral G(x, x') s(x') dx'`.
#[derive(Debug, Clone)]
pub struct BoxSineSeries {
    spec: BoxGreenSpec,
    /// `s_lmn = sum_nodes weight * s * sin(l pi x / L1) sin(m pi y / L2) sin(n pi z / L3)`, l fastest.
    coeffs: Vec<f64>,
}

impl BoxSineSeries {
    /// `grid` must be a non-periodic grid covering exactly `[0, L1] x [0, L2] x [0, L3]`.
    pub fn from_samples(
        spec: &BoxGreenSpec,
        grid: &GridSpec,
        values: &[f64],
        rule: QuadratureRule,
    ) -> Result<Self> {
        spec.validate()?;
        grid.validate()?;
        if grid.is_periodic() || grid.origin != [0.0; 3] || grid.lengths() != spec.lengths() {
            return Err(Error::InvalidGrid(
                "sine series grid must cover the box [0, L1] x [0, L2] x [0, L3]".into(),
            ));
        }
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "box source".into(),
            });
        }
        let q = QuadratureSpec::new(rule, 0.0, 1.0);
        let nt = spec.n_terms;
        let dims = grid.dims();
        let lens = spec.lengths();
        // basis[axis][l * n_axis + i] = weight_i * sin((l + 1) pi x_i / L)
        let basis: Vec<Vec<f64>> = (0..3)
            .map(|axis| {
                let w = q.weights(grid, axis);
                let n = dims[axis];
                let mut b = vec![0.0; nt * n];
                for l in 0..nt {
                    for i in 0..n {
                        let t = grid.coord(axis, i) / lens[axis];
                        b[l * n + i] = w[i] * sinpi((l + 1) as f64 * t);
                    }
                }
                b
            })
            .collect();
        let [nx, ny, nz] = dims;
        // Contract x: a[l, j, k]
        let a: Vec<f64> = (0..ny * nz)
            .into_par_iter()
            .flat_map_iter(|jk| {
                let row = &values[jk * nx..(jk + 1) * nx];
                let bx = &basis[0];
                (0..nt).map(move |l| {
                    let bl = &bx[l * nx..(l + 1) * nx];
                    row.iter()
                        .zip(bl)
                        .map(|(v, w)| v * w)
                        .collect::<NeumaierSum>()
                        .value()
                })
            })
            .collect();
        // a is laid out [(j, k)][l]; contract y: b[(k)][m][l]
        let b: Vec<f64> = (0..nz)
            .into_par_iter()
            .flat_map_iter(|k| {
                let a = &a;
                let by = &basis[1];
                (0..nt).flat_map(move |m| {
                    (0..nt).map(move |l| {
                        (0..ny)
                            .map(|j| a[(j + ny * k) * nt + l] * by[m * ny + j])
                            .collect::<NeumaierSum>()
                            .value()
                    })
                })
            })
            .collect();
        // contract z: coeffs[n][m][l]
        let coeffs: Vec<f64> = (0..nt)
            .into_par_iter()
            .flat_map_iter(|n| {
                let b = &b;
                let bz = &basis[2];
                (0..nt * nt).map(move |ml| {
                    (0..nz)
                        .map(|k| b[k * nt * nt + ml] * bz[n * nz + k])
                        .collect::<NeumaierSum>()
                        .value()
                })
            })
            .collect();
        Ok(BoxSineSeries {
            spec: *spec,
            coeffs,
        })
    }

    /// Largest sine coefficient magnitude.
    pub fn max_coefficient(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// `integral G(x, x') s(x') dx'` at `x`.
    pub fn evaluate(&self, x: [f64; 3]) -> Result<GreenValue> {
        self.spec.check_point(x)?;
        let n = self.spec.n_terms;
        let l = self.spec.lengths();
        let s = [
            sine_table(n, x[0] / l[0]),
            sine_table(n, x[1] / l[1]),
            sine_table(n, x[2] / l[2]),
        ];
        Ok(sum_series(&self.spec, |a, b, c| {
            self.coeffs[a + n * (b + n * c)] * (s[0][a] * s[1][b] * s[2][c])
        }))
    }
}

/// Parameters of the box vorticity family `gamma * (x + a1, y + a2, z + a3) / r_b^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub gamma: f64,
}

impl BoxParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a1", self.a1), ("a2", self.a2), ("a3", self.a3)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::BadParam(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !self.gamma.is_finite() {
            return Err(Error::NonFinite {
                context: "gamma".into(),
            });
        }
        Ok(())
    }

    fn shifted(&self, p: [f64; 3]) -> [f64; 3] {
        [p[0] + self.a1, p[1] + self.a2, p[2] + self.a3]
    }

    pub fn vorticity(&self, p: [f64; 3]) -> [f64; 3] {
        let s = self.shifted(p);
        let r2 = s[0] * s[0] + s[1] * s[1] + s[2] * s[2];
        let f = self.gamma / (r2 * r2.sqrt());
        [f * s[0], f * s[1], f * s[2]]
    }

    pub fn vorticity_curl(&self, p: [f64; 3]) -> [f64; 3] {
        radial_field_curl(self.gamma, self.shifted(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxVelocity {
    pub velocity: Vec<[f64; 3]>,
    /// Largest magnitude of the sampled curl source.
    pub source_max: f64,
    /// Bound on `|u|` implied by the source size plus the largest series tail.
    pub error_budget: f64,
}

/// Velocity of the box family: `u = integral G_b curl(w) dx'`, evaluated with the
/// sine series on a `q.volume_nodes^3` quadrature grid.
pub fn box_velocity(
    params: &BoxParams,
    spec: &BoxGreenSpec,
    q: &QuadratureSpec,
    targets: &[[f64; 3]],
) -> Result<BoxVelocity> {
    params.validate()?;
    spec.validate()?;
    q.validate()?;
    for t in targets {
        spec.check_point(*t)?;
    }
    let grid = GridSpec::new(
        [q.volume_nodes; 3],
        spec.lengths(),
        DomainKind::BoxDirichlet,
    )?;
    let source = match q.curl_source {
        CurlSource::Analytic => VectorField::from_fn(grid, |p| params.vorticity_curl(p)),
        CurlSource::Stencil => {
            operators::curl(&VectorField::from_fn(grid, |p| params.vorticity(p)))?
        }
    };
    source.check_finite("box curl source")?;
    let series: Vec<BoxSineSeries> = (0..3)
        .map(|c| BoxSineSeries::from_samples(spec, &grid, &source.components[c], q.rule))
        .collect::<Result<_>>()?;
    let mut tail: f64 = 0.0;
    let mut velocity = Vec::with_capacity(targets.len());
    for t in targets {
        let mut u = [0.0; 3];
        for c in 0..3 {
            let g = series[c].evaluate(*t)?;
            u[c] = g.value;
            tail = tail.max(g.tail_estimate);
        }
        velocity.push(u);
    }
    let source_max = source.max_abs();
    let lmin = spec.l1.min(spec.l2).min(spec.l3);
    Ok(BoxVelocity {
        velocity,
        source_max,
        error_budget: source_max * lmin * lmin / 8.0 + tail,
    })
}

// ---------------------------------------------------------------------------
// Compact bump convergence study

/// Divergence-free velocity `curl(0, 0, psi)` with `psi = exp(-r^2 / (1 - r^2))` on the unit ball.
pub fn bump_velocity(p: [f64; 3]) -> [f64; 3] {
    let s = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
    if s >= 1.0 {
        return [0.0; 3];
    }
    let d = -2.0 / ((1.0 - s) * (1.0 - s)) * (-s / (1.0 - s)).exp();
    [d * p[1], -d * p[0], 0.0]
}

/// Curl of [`bump_velocity`]: `(psi_xz, psi_yz, -psi_xx - psi_yy)`.
pub fn bump_vorticity(p: [f64; 3]) -> [f64; 3] {
    let s = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
    if s >= 1.0 {
        return [0.0; 3];
    }
    let psi = (-s / (1.0 - s)).exp();
    let gs = -1.0 / ((1.0 - s) * (1.0 - s));
    let gss = -2.0 / ((1.0 - s) * (1.0 - s) * (1.0 - s));
    let hess = |i: usize, j: usize| {
        psi * (4.0 * gs * gs * p[i] * p[j]
            + 4.0 * gss * p[i] * p[j]
            + if i == j { 2.0 * gs } else { 0.0 })
    };
    [hess(0, 2), hess(1, 2), -hess(0, 0) - hess(1, 1)]
}

const BUMP_PROBES: [[f64; 3]; 6] = [
    [0.3, 0.2, 0.1],
    [-0.4, 0.1, 0.35],
    [0.1, -0.5, -0.2],
    [0.0, 0.0, 0.0],
    [0.6, 0.1, -0.1],
    [1.1, 0.0, 0.0],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpStudyLevel {
    pub n: usize,
    pub h: f64,
    /// Max over the probes of the fourth-order central divergence of the recovered velocity.
    pub max_divergence: f64,
    /// Max over the probes of the componentwise error against [`bump_velocity`].
    pub max_error: f64,
}

/// Recovers the velocity of [`bump_vorticity`] by whole-space quadrature on the cube
/// `[-1.25, 1.25]^3` with `n` nodes per axis, for each `n` in `resolutions`.
pub fn bump_convergence_study(
    resolutions: &[usize],
    rule: QuadratureRule,
) -> Result<Vec<BumpStudyLevel>> {
    const HALF: f64 = 1.25;
    resolutions
        .iter()
        .map(|&n| {
            let spec = GridSpec::with_origin(
                [n; 3],
                [2.0 * HALF; 3],
                [-HALF; 3],
                DomainKind::WholeSpaceTruncated,
            )?;
            let w = VectorField::from_fn(spec, bump_vorticity);
            let q = QuadratureSpec::new(rule, 0.0, 100.0);
            let h = spec.spacing()[0];
            let centers: Vec<[f64; 3]> = BUMP_PROBES
                .iter()
                .map(|p| p.map(|v| -HALF + ((v + HALF) / h).round() * h))
                .collect();
            let mut targets = centers.clone();
            for c in &centers {
                for a in 0..3 {
                    for s in [-2.0, -1.0, 1.0, 2.0] {
                        let mut t = *c;
                        t[a] += s * h;
                        targets.push(t);
                    }
                }
            }
            let u = biot_savart_whole_space(&w, &q, &targets)?;
            let np = centers.len();
            let mut max_error: f64 = 0.0;
            let mut max_divergence: f64 = 0.0;
            for (i, c) in centers.iter().enumerate() {
                let exact = bump_velocity(*c);
                for a in 0..3 {
                    max_error = max_error.max((u[i][a] - exact[a]).abs());
                }
                let base = np + 12 * i;
                let mut div = 0.0;
                for a in 0..3 {
                    let f = |k: usize| u[base + 4 * a + k][a];
                    div += (f(0) - 8.0 * f(1) + 8.0 * f(2) - f(3)) / (12.0 * h);
                }
                max_divergence = max_divergence.max(div.abs());
            }
            Ok(BumpStudyLevel {
                n,
                h,
                max_divergence,
                max_error,
            })
        })
        .collect()
}

/// `log(e_i / e_{i+1}) / log(h_i / h_{i+1})` for consecutive levels.
pub fn observed_orders(
    levels: &[BumpStudyLevel],
    metric: impl Fn(&BumpStudyLevel) -> f64,
) -> Vec<f64> {
    levels
        .windows(2)
        .map(|w| (metric(&w[0]) / metric(&w[1])).ln() / (w[0].h / w[1].h).ln())
        .collect()
}

// ---------------------------------------------------------------------------
// Target/velocity CSV

/// Reads target points from CSV with columns `x,y,z` (extra columns ignored).
pub fn read_targets<R: Read>(r: R) -> Result<Vec<[f64; 3]>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(r);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let idx = [col("x")?, col("y")?, col("z")?];
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let mut p = [0.0; 3];
        for a in 0..3 {
            let field = rec
                .get(idx[a])
                .ok_or_else(|| Error::Format("short row".into()))?;
            p[a] = field
                .parse()
                .map_err(|_| Error::Format(format!("not a number: {field}")))?;
        }
        out.push(p);
    }
    Ok(out)
}

/// Writes `x,y,z,u,v,w` rows with 17 significant digits.
pub fn write_velocity_csv<W: Write>(
    mut w: W,
    targets: &[[f64; 3]],
    velocity: &[[f64; 3]],
) -> Result<()> {
    if targets.len() != velocity.len() {
        return Err(Error::BadParam(
            "targets and velocities differ in length".into(),
        ));
    }
    writeln!(w, "x,y,z,u,v,w")?;
    for (p, u) in targets.iter().zip(velocity) {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            p[0], p[1], p[2], u[0], u[1], u[2]
        )?;
    }
    Ok(())
}
