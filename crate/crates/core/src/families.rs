//! Closed-form spurt fields and vorticity families, with residual reports that
//! measure how far each one is from an Euler solution.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{momentum_residual, MomentumResidual};
use crate::error::{Error, Result};
use crate::grid::{DomainKind, GridSpec, ScalarField, VectorField};
use crate::mollifier::BumpKernel;
use crate::operators::{self, Differentiator};
use crate::velocity_recovery::{
    box_velocity, halfspace_velocity, velocity_from_vorticity_periodic, BoxGreenSpec, BoxParams,
    HalfSpaceParams, QuadratureSpec,
};

const IC_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Time modulation

/// Smooth scalar function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum TimeModulation {
    /// `offset + scale * t^power * exp(-rate * t)`.
    PolyExp {
        #[serde(default)]
        offset: f64,
        #[serde(default = "one")]
        scale: f64,
        power: u32,
        #[serde(default)]
        rate: f64,
    },
    /// `offset + scale * sin^2(omega * t)`.
    SinSquared {
        #[serde(default)]
        offset: f64,
        #[serde(default = "one")]
        scale: f64,
        omega: f64,
    },
    /// Natural cubic spline through `(times, values)`, extended by the end cubics.
    Spline { times: Vec<f64>, values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

/// Initial condition a modulation has to meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialCondition {
    /// `gamma(0) = 1`.
    Unit,
    /// `gamma(0) = gamma'(0) = 0`.
    Quiescent,
}

impl TimeModulation {
    /// `t^2 exp(-t)`.
    pub fn default_quiescent() -> Self {
        TimeModulation::PolyExp {
            offset: 0.0,
            scale: 1.0,
            power: 2,
            rate: 1.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        TimeModulation::PolyExp {
            offset: value,
            scale: 0.0,
            power: 0,
            rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TimeModulation::PolyExp {
                offset,
                scale,
                rate,
                ..
            } => {
                if ![offset, scale, rate].iter().all(|v| v.is_finite()) {
                    return Err(Error::BadParam("poly_exp parameters must be finite".into()));
                }
            }
            TimeModulation::SinSquared {
                offset,
                scale,
                omega,
            } => {
                if ![offset, scale, omega].iter().all(|v| v.is_finite()) {
                    return Err(Error::BadParam(
                        "sin_squared parameters must be finite".into(),
                    ));
                }
            }
            TimeModulation::Spline { times, values } => {
                if times.len() != values.len() || times.len() < 2 {
                    return Err(Error::BadParam(
                        "spline needs at least two (time, value) pairs of equal count".into(),
                    ));
                }
                if !times.iter().chain(values).all(|v| v.is_finite()) {
                    return Err(Error::BadParam("spline samples must be finite".into()));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::BadParam(
                        "spline times must be strictly increasing".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn check_initial(&self, ic: InitialCondition, name: &str) -> Result<()> {
        self.validate()?;
        let (g0, d0) = (self.value(0.0), self.derivative(0.0));
        let ok = match ic {
            InitialCondition::Unit => (g0 - 1.0).abs() <= IC_TOL,
            InitialCondition::Quiescent => g0.abs() <= IC_TOL && d0.abs() <= IC_TOL,
        };
        if ok {
            Ok(())
        } else {
            let want = match ic {
                InitialCondition::Unit => "value 1",
                InitialCondition::Quiescent => "value and derivative 0",
            };
            Err(Error::BadParam(format!(
                "{name} must have {want} at t = 0, got ({g0}, {d0})"
            )))
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            &TimeModulation::PolyExp {
                offset,
                scale,
                power,
                rate,
            } => offset + scale * t.powi(power as i32) * (-rate * t).exp(),
            &TimeModulation::SinSquared {
                offset,
                scale,
                omega,
            } => {
                let s = (omega * t).sin();
                offset + scale * s * s
            }
            TimeModulation::Spline { times, values } => spline_eval(times, values, t).0,
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            &TimeModulation::PolyExp {
                scale, power, rate, ..
            } => {
                let e = (-rate * t).exp();
                let p = power as i32;
                let lead = if power == 0 {
                    0.0
                } else {
                    p as f64 * t.powi(p - 1)
                };
                scale * (lead - rate * t.powi(p)) * e
            }
            &TimeModulation::SinSquared { scale, omega, .. } => {
                scale * omega * (2.0 * omega * t).sin()
            }
            TimeModulation::Spline { times, values } => spline_eval(times, values, t).1,
        }
    }
}

/// Second derivatives of the natural cubic spline (Thomas algorithm).
fn spline_moments(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = t[i] - t[i - 1];
        let h1 = t[i + 1] - t[i];
        let rhs = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
        c[i] = h1 / diag;
        d[i] = (rhs - h0 * d[i - 1]) / diag;
    }
    for i in (1..n - 1).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}

fn spline_eval(t: &[f64], y: &[f64], x: f64) -> (f64, f64) {
    let m = spline_moments(t, y);
    let n = t.len();
    let i = match t.partition_point(|&v| v <= x) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    };
    let h = t[i + 1] - t[i];
    let a = (t[i + 1] - x) / h;
    let b = (x - t[i]) / h;
    let value = a * y[i]
        + b * y[i + 1]
        + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0;
    let slope = (y[i + 1] - y[i]) / h - (3.0 * a * a - 1.0) * h * m[i] / 6.0
        + (3.0 * b * b - 1.0) * h * m[i + 1] / 6.0;
    (value, slope)
}

// ---------------------------------------------------------------------------
// Spurts

/// Spatially constant velocity `(c1 f, c2 g, c3 h)` with pressure
/// `p / rho = sum_i c_i (2L - x_i) f_i'(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpurtSpec {
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub c2: f64,
    #[serde(default)]
    pub c3: f64,
    #[serde(default = "TimeModulation::default_quiescent")]
    pub f: TimeModulation,
    #[serde(default = "TimeModulation::default_quiescent")]
    pub g: TimeModulation,
    #[serde(default = "TimeModulation::default_quiescent")]
    pub h: TimeModulation,
    #[serde(default = "two_pi")]
    pub l: f64,
}

fn two_pi() -> f64 {
    2.0 * PI
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpurtValue {
    pub velocity: [f64; 3],
    pub acceleration: [f64; 3],
}

impl SpurtSpec {
    pub fn validate(&self) -> Result<()> {
        if ![self.c1, self.c2, self.c3].iter().all(|v| v.is_finite()) {
            return Err(Error::BadParam("spurt constants must be finite".into()));
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::BadParam(format!(
                "spurt L must be positive, got {}",
                self.l
            )));
        }
        self.f.check_initial(InitialCondition::Quiescent, "f")?;
        self.g.check_initial(InitialCondition::Quiescent, "g")?;
        self.h.check_initial(InitialCondition::Quiescent, "h")
    }

    fn constants(&self) -> [f64; 3] {
        [self.c1, self.c2, self.c3]
    }

    fn modulations(&self) -> [&TimeModulation; 3] {
        [&self.f, &self.g, &self.h]
    }

    /// `rho |c_i| L |f_i'(t)|`: jump of the pressure across one period along each axis.
    pub fn aperiodicity_closed_form(&self, t: f64, rho: f64) -> [f64; 3] {
        let c = self.constants();
        let m = self.modulations();
        [0, 1, 2].map(|a| rho * c[a].abs() * self.l * m[a].derivative(t).abs())
    }
}

pub fn spurt_eval(s: &SpurtSpec, t: f64) -> SpurtValue {
    let c = s.constants();
    let m = s.modulations();
    SpurtValue {
        velocity: [0, 1, 2].map(|a| c[a] * m[a].value(t)),
        acceleration: [0, 1, 2].map(|a| c[a] * m[a].derivative(t)),
    }
}

/// Spurt pressure sampled on any grid.
pub fn spurt_pressure(s: &SpurtSpec, t: f64, rho: f64, spec: GridSpec) -> ScalarField {
    let c = s.constants();
    let m = s.modulations();
    let d = [0, 1, 2].map(|a| c[a] * m[a].derivative(t));
    let two_l = 2.0 * s.l;
    ScalarField::from_fn(spec, |p| {
        rho * (d[0] * (two_l - p[0]) + d[1] * (two_l - p[1]) + d[2] * (two_l - p[2]))
    })
}

/// Closed grid `[0, L]^3` with `n` nodes per axis.
pub fn spurt_grid(s: &SpurtSpec, n: usize) -> Result<GridSpec> {
    GridSpec::closed_box([n; 3], [0.0; 3], [s.l; 3], DomainKind::BoxDirichlet)
}

/// Largest pressure jump between opposite faces of `[0, L]^3`, per axis, from grid samples.
pub fn measure_spurt_aperiodicity(s: &SpurtSpec, t: f64, rho: f64, n: usize) -> Result<[f64; 3]> {
    let spec = spurt_grid(s, n)?;
    let p = spurt_pressure(s, t, rho, spec);
    let mut out = [0.0; 3];
    for (a, slot) in out.iter_mut().enumerate() {
        let (b, c) = ((a + 1) % 3, (a + 2) % 3);
        let mut idx = [0usize; 3];
        for j in 0..n {
            for k in 0..n {
                idx[b] = j;
                idx[c] = k;
                idx[a] = 0;
                let lo = p.values[spec.index(idx[0], idx[1], idx[2])];
                idx[a] = n - 1;
                let hi = p.values[spec.index(idx[0], idx[1], idx[2])];
                *slot = f64::max(*slot, (lo - hi).abs());
            }
        }
    }
    Ok(out)
}

/// Momentum residual of the spurt alone on the closed grid `[0, L]^3`.
pub fn spurt_residual(s: &SpurtSpec, t: f64, rho: f64, n: usize) -> Result<MomentumResidual> {
    s.validate()?;
    let spec = spurt_grid(s, n)?;
    let v = spurt_eval(s, t);
    let u = VectorField::from_fn(spec, |_| v.velocity);
    let u_t = VectorField::from_fn(spec, |_| v.acceleration);
    momentum_residual(&u_t, &u, &spurt_pressure(s, t, rho, spec), rho)
}

/// `max |(c . grad) u + (u . grad) c|` for a constant vector `c`; the second term is identically zero.
pub fn cross_term(c: [f64; 3], base: &VectorField) -> Result<f64> {
    base.check_finite("base velocity")?;
    let d = Differentiator::new(&base.spec)?;
    let parts: Vec<[Vec<f64>; 3]> = (0..3).map(|i| d.gradient_of(&base.components[i])).collect();
    let n = base.spec.len();
    Ok(crate::summation::deterministic_max(n, |p| {
        let v: [f64; 3] = [0, 1, 2]
            .map(|i| c[0] * parts[i][0][p] + c[1] * parts[i][1][p] + c[2] * parts[i][2][p]);
        (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
    }))
}

// ---------------------------------------------------------------------------
// Vorticity families

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    /// `w = gamma (f1(y, z), f2(z, x), f3(x, y))` with `f_i` products of 1D bumps.
    R3Bumps {
        /// Support radius of the 1D bump.
        radius: f64,
        #[serde(default = "pi3")]
        center: [f64; 3],
        #[serde(default = "ones")]
        amplitudes: [f64; 3],
    },
    /// `w = gamma (x, y, z + c) / r_c^3` in `z >= 0` with Gaussian wall data.
    HalfSpace {
        a: f64,
        b: f64,
        c: f64,
        /// Optional time dependence `a(t) = a * m(t)` of the wall data.
        #[serde(default)]
        a_modulation: Option<TimeModulation>,
        #[serde(default)]
        b_modulation: Option<TimeModulation>,
    },
    /// `w = gamma (x + a1, y + a2, z + a3) / r_b^3` in `[0, L1] x [0, L2] x [0, L3]`.
    Box {
        a1: f64,
        a2: f64,
        a3: f64,
        l1: f64,
        l2: f64,
        l3: f64,
    },
}

fn pi3() -> [f64; 3] {
    [PI; 3]
}

fn ones() -> [f64; 3] {
    [1.0; 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    #[serde(flatten)]
    pub kind: FamilyKind,
    pub modulation: TimeModulation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySamples {
    pub vorticity: Vec<[f64; 3]>,
    /// The closed form has zero curl away from its singular point.
    pub curl_free: bool,
    /// The closed form has zero divergence.
    pub divergence_free: bool,
}

impl FamilySpec {
    pub fn name(&self) -> &'static str {
        match self.kind {
            FamilyKind::R3Bumps { .. } => "r3_bumps",
            FamilyKind::HalfSpace { .. } => "half_space",
            FamilyKind::Box { .. } => "box",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            FamilyKind::R3Bumps {
                radius,
                center,
                amplitudes,
            } => {
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::BadParam(format!(
                        "bump radius must be positive, got {radius}"
                    )));
                }
                if !center.iter().chain(amplitudes).all(|v| v.is_finite()) {
                    return Err(Error::BadParam(
                        "bump center and amplitudes must be finite".into(),
                    ));
                }
                self.modulation
                    .check_initial(InitialCondition::Unit, "gamma")
            }
            FamilyKind::HalfSpace {
                a,
                b,
                c,
                a_modulation,
                b_modulation,
            } => {
                if *c <= 0.0 && c.is_finite() {
                    return Err(Error::SingularityInDomain);
                }
                HalfSpaceParams {
                    a: *a,
                    b: *b,
                    c: *c,
                    gamma: 1.0,
                }
                .validate()?;
                for m in [a_modulation, b_modulation].into_iter().flatten() {
                    m.validate()?;
                }
                self.modulation
                    .check_initial(InitialCondition::Unit, "gamma")
            }
            FamilyKind::Box {
                a1,
                a2,
                a3,
                l1,
                l2,
                l3,
            } => {
                BoxGreenSpec {
                    l1: *l1,
                    l2: *l2,
                    l3: *l3,
                    n_terms: 1,
                    tol: 1.0,
                }
                .validate()?;
                let a = [*a1, *a2, *a3];
                let l = [*l1, *l2, *l3];
                if (0..3).all(|i| a[i] <= 0.0 && -a[i] <= l[i]) {
                    return Err(Error::SingularityInDomain);
                }
                BoxParams {
                    a1: *a1,
                    a2: *a2,
                    a3: *a3,
                    gamma: 0.0,
                }
                .validate()?;
                self.modulation
                    .check_initial(InitialCondition::Quiescent, "gamma")
            }
        }
    }

    /// Half-space parameters at time `t`.
    pub fn halfspace_params(&self, t: f64) -> Option<HalfSpaceParams> {
        match &self.kind {
            FamilyKind::HalfSpace {
                a,
                b,
                c,
                a_modulation,
                b_modulation,
            } => Some(HalfSpaceParams {
                a: a * a_modulation.as_ref().map_or(1.0, |m| m.value(t)),
                b: b * b_modulation.as_ref().map_or(1.0, |m| m.value(t)),
                c: *c,
                gamma: self.modulation.value(t),
            }),
            _ => None,
        }
    }

    pub fn box_params(&self, t: f64) -> Option<(BoxParams, [f64; 3])> {
        match self.kind {
            FamilyKind::Box {
                a1,
                a2,
                a3,
                l1,
                l2,
                l3,
            } => Some((
                BoxParams {
                    a1,
                    a2,
                    a3,
                    gamma: self.modulation.value(t),
                },
                [l1, l2, l3],
            )),
            _ => None,
        }
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        match self.kind {
            FamilyKind::R3Bumps { .. } => true,
            FamilyKind::HalfSpace { .. } => p[2] >= 0.0,
            FamilyKind::Box { l1, l2, l3, .. } => {
                let l = [l1, l2, l3];
                (0..3).all(|a| p[a] >= 0.0 && p[a] <= l[a])
            }
        }
    }

    /// Closed-form vorticity with unit modulation.
    fn unit_vorticity(&self, p: [f64; 3]) -> [f64; 3] {
        match &self.kind {
            FamilyKind::R3Bumps {
                radius,
                center,
                amplitudes,
            } => {
                let b: [f64; 3] = [0, 1, 2].map(|a| {
                    let s = (p[a] - center[a]) / radius;
                    BumpKernel::profile(s * s)
                });
                [
                    amplitudes[0] * b[1] * b[2],
                    amplitudes[1] * b[2] * b[0],
                    amplitudes[2] * b[0] * b[1],
                ]
            }
            FamilyKind::HalfSpace { c, .. } => HalfSpaceParams {
                a: 1.0,
                b: 1.0,
                c: *c,
                gamma: 1.0,
            }
            .vorticity(p),
            FamilyKind::Box { a1, a2, a3, .. } => BoxParams {
                a1: *a1,
                a2: *a2,
                a3: *a3,
                gamma: 1.0,
            }
            .vorticity(p),
        }
    }
}

/// Samples of the family vorticity at time `t`.
pub fn family_vorticity(spec: &FamilySpec, t: f64, points: &[[f64; 3]]) -> Result<FamilySamples> {
    spec.validate()?;
    if let Some(p) = points
        .iter()
        .find(|p| !p.iter().all(|v| v.is_finite()) || !spec.contains(**p))
    {
        return Err(Error::OutOfDomain { point: *p });
    }
    let gamma = spec.modulation.value(t);
    let vorticity = points
        .par_iter()
        .map(|p| spec.unit_vorticity(*p).map(|v| gamma * v))
        .collect();
    let curl_free = !matches!(spec.kind, FamilyKind::R3Bumps { .. });
    Ok(FamilySamples {
        vorticity,
        curl_free,
        divergence_free: true,
    })
}

/// Family vorticity sampled on a grid.
pub fn family_vorticity_field(spec: &FamilySpec, t: f64, grid: GridSpec) -> Result<VectorField> {
    let points: Vec<[f64; 3]> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let s = family_vorticity(spec, t, &points)?;
    let mut out = VectorField::zeros(grid);
    for (i, w) in s.vorticity.iter().enumerate() {
        for c in 0..3 {
            out.components[c][i] = w[c];
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Residual reports

/// Base flows available for superposition tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseFlow {
    Abc {
        #[serde(default = "one")]
        a: f64,
        #[serde(default = "one")]
        b: f64,
        #[serde(default = "one")]
        c: f64,
    },
}

impl BaseFlow {
    pub fn velocity(&self, spec: GridSpec) -> VectorField {
        match *self {
            BaseFlow::Abc { a, b, c } => crate::flows::abc(spec, a, b, c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub t_samples: Vec<f64>,
    #[serde(default = "one")]
    pub rho: f64,
    /// Time step of the central differences for `u_t`.
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Coarse resolution; the fine one doubles it.
    #[serde(default = "default_report_n")]
    pub n: usize,
    /// Edge of the periodic cube used by the bump family and by superposition bases.
    #[serde(default = "two_pi")]
    pub periodic_length: f64,
    /// Closed sub-box `[lo, hi]` on which bounded-domain families are measured.
    #[serde(default)]
    pub sub_box: Option<[[f64; 3]; 2]>,
    #[serde(default)]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(default = "default_series_terms")]
    pub series_terms: usize,
    #[serde(default)]
    pub base: Option<BaseFlow>,
}

fn default_fd_step() -> f64 {
    1e-3
}
fn default_report_n() -> usize {
    8
}
fn default_series_terms() -> usize {
    16
}

impl ReportConfig {
    pub fn new(t_samples: Vec<f64>) -> Self {
        ReportConfig {
            t_samples,
            rho: 1.0,
            fd_step: default_fd_step(),
            n: default_report_n(),
            periodic_length: two_pi(),
            sub_box: None,
            quadrature: None,
            series_terms: default_series_terms(),
            base: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_samples.is_empty() || !self.t_samples.iter().all(|t| t.is_finite() && *t >= 0.0) {
            return Err(Error::ConfigInvalid(
                "report t_samples must be nonempty, finite and >= 0".into(),
            ));
        }
        for (name, v) in [
            ("rho", self.rho),
            ("fd_step", self.fd_step),
            ("periodic_length", self.periodic_length),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::ConfigInvalid(format!(
                    "report {name} must be positive, got {v}"
                )));
            }
        }
        if self.n < 5 {
            return Err(Error::ConfigInvalid(format!(
                "report n must be >= 5, got {}",
                self.n
            )));
        }
        if self.series_terms == 0 {
            return Err(Error::ConfigInvalid(
                "report series_terms must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Measurements at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub t: f64,
    pub gamma: f64,
    /// `max |curl F|` with `F = u_t + (u . grad) u`, at the fine resolution.
    pub curl_f_max: f64,
    pub curl_f_max_coarse: f64,
    /// Coarse over fine value of `curl_f_max` (NaN when both vanish).
    pub convergence_ratio: f64,
    pub cross_term_max: Option<f64>,
    pub cross_term_max_coarse: Option<f64>,
    pub momentum_residual: Option<f64>,
    /// Fine resolution (nodes per axis).
    pub resolution: usize,
    /// `max |u_t(shortcut) - u_t(finite difference)|` where a shortcut exists.
    pub ut_consistency: Option<f64>,
    /// Measured pressure jump across one period (spurts only).
    pub pressure_aperiodicity: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyReport {
    pub family: String,
    pub entries: Vec<ReportEntry>,
}

pub const REPORT_CSV_HEADER: &str = "family,t,gamma,curl_f_max,curl_f_max_coarse,convergence_ratio,cross_term_max,cross_term_max_coarse,momentum_residual,resolution,ut_consistency,aperiodicity_x,aperiodicity_y,aperiodicity_z";

impl FamilyReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{REPORT_CSV_HEADER}")?;
        self.write_csv_rows(w)
    }

    /// Rows of [`FamilyReport::write_csv`] without the header.
    pub fn write_csv_rows<W: Write>(&self, mut w: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.16e}"));
        for e in &self.entries {
            let ap = e.pressure_aperiodicity.map_or([None; 3], |a| a.map(Some));
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{},{},{},{},{}",
                self.family,
                e.t,
                e.gamma,
                e.curl_f_max,
                e.curl_f_max_coarse,
                e.convergence_ratio,
                opt(e.cross_term_max),
                opt(e.cross_term_max_coarse),
                opt(e.momentum_residual),
                e.resolution,
                opt(e.ut_consistency),
                opt(ap[0]),
                opt(ap[1]),
                opt(ap[2]),
            )?;
        }
        Ok(())
    }
}

fn ratio(coarse: f64, fine: f64) -> f64 {
    if fine == 0.0 && coarse == 0.0 {
        f64::NAN
    } else {
        coarse / fine
    }
}

/// `max |curl(u_t + (u . grad) u)|`.
fn curl_of_momentum(u_t: &VectorField, u: &VectorField) -> Result<(VectorField, f64)> {
    let f = u_t.add(&operators::advect(u, u)?)?;
    let c = operators::curl(&f)?.max_norm();
    Ok((f, c))
}

/// Per-resolution measurement.
struct Level {
    curl_f: f64,
    cross: Option<f64>,
    momentum: Option<f64>,
    ut_consistency: Option<f64>,
    aperiodicity: Option<[f64; 3]>,
}

/// Residual report of a vorticity family.
pub fn family_residual_report(spec: &FamilySpec, cfg: &ReportConfig) -> Result<FamilyReport> {
    spec.validate()?;
    cfg.validate()?;
    let entries = cfg
        .t_samples
        .par_iter()
        .map(|&t| {
            let coarse = family_level(spec, cfg, t, cfg.n, false)?;
            let fine = family_level(spec, cfg, t, cfg.n, true)?;
            Ok(entry(
                t,
                spec.modulation.value(t),
                coarse,
                fine,
                fine_nodes(spec, cfg.n),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FamilyReport {
        family: spec.name().to_string(),
        entries,
    })
}

fn fine_nodes(spec: &FamilySpec, n: usize) -> usize {
    match spec.kind {
        FamilyKind::R3Bumps { .. } => 2 * n,
        _ => 2 * n - 1,
    }
}

fn entry(t: f64, gamma: f64, coarse: Level, fine: Level, resolution: usize) -> ReportEntry {
    ReportEntry {
        t,
        gamma,
        curl_f_max: fine.curl_f,
        curl_f_max_coarse: coarse.curl_f,
        convergence_ratio: ratio(coarse.curl_f, fine.curl_f),
        cross_term_max: fine.cross,
        cross_term_max_coarse: coarse.cross,
        momentum_residual: fine.momentum,
        resolution,
        ut_consistency: fine.ut_consistency,
        pressure_aperiodicity: fine.aperiodicity,
    }
}

fn default_sub_box(spec: &FamilySpec) -> [[f64; 3]; 2] {
    match spec.kind {
        FamilyKind::Box { l1, l2, l3, .. } => [
            [0.25 * l1, 0.25 * l2, 0.25 * l3],
            [0.75 * l1, 0.75 * l2, 0.75 * l3],
        ],
        _ => [[-1.0, -1.0, 0.25], [1.0, 1.0, 1.25]],
    }
}

fn family_level(
    spec: &FamilySpec,
    cfg: &ReportConfig,
    t: f64,
    n: usize,
    fine: bool,
) -> Result<Level> {
    let tau = cfg.fd_step;
    match spec.kind {
        FamilyKind::R3Bumps { .. } => {
            let nodes = if fine { 2 * n } else { n };
            let nodes = nodes + nodes % 2;
            let grid = GridSpec::periodic_cube(nodes, cfg.periodic_length)?;
            let u1 = velocity_from_vorticity_periodic(
                &family_vorticity_field(spec, 0.0, grid)?.scale(1.0),
            )?;
            // The bump family is linear in gamma: u(t) = gamma(t) u(0).
            let (g, dg) = (spec.modulation.value(t), spec.modulation.derivative(t));
            let u = u1.scale(g);
            let u_t = u1.scale(dg);
            let fd =
                (spec.modulation.value(t + tau) - spec.modulation.value(t - tau)) / (2.0 * tau);
            let u_t_fd = u1.scale(fd);
            let ut_consistency = Some(u_t.sub(&u_t_fd)?.max_norm());
            let (f, curl_f) = curl_of_momentum(&u_t, &u)?;
            let p = operators::poisson_solve_periodic(
                &operators::divergence(&f)?.map(|v| -cfg.rho * v),
            )?;
            let momentum = Some(f.axpy(1.0 / cfg.rho, &operators::gradient(&p)?)?.max_norm());
            let cross = match cfg.base {
                Some(base) => {
                    let ub = base.velocity(grid);
                    Some(
                        operators::advect(&u, &ub)?
                            .add(&operators::advect(&ub, &u)?)?
                            .max_norm(),
                    )
                }
                None => None,
            };
            Ok(Level {
                curl_f,
                cross,
                momentum,
                ut_consistency,
                aperiodicity: None,
            })
        }
        FamilyKind::HalfSpace {
            ref a_modulation,
            ref b_modulation,
            ..
        } => {
            let [lo, hi] = cfg.sub_box.unwrap_or_else(|| default_sub_box(spec));
            if lo[2] < 0.0 {
                return Err(Error::OutOfDomain { point: lo });
            }
            let nodes = if fine { 2 * n - 1 } else { n };
            let grid = GridSpec::closed_box([nodes; 3], lo, hi, DomainKind::HalfSpaceTruncated)?;
            let q = cfg.quadrature.unwrap_or_else(default_halfspace_quadrature);
            let points: Vec<[f64; 3]> = (0..grid.len()).map(|i| grid.point(i)).collect();
            let sample = |tt: f64| -> Result<VectorField> {
                let params = spec.halfspace_params(tt).expect("half-space family");
                to_field(grid, halfspace_velocity(&params, &q, &points)?)
            };
            let u = sample(t)?;
            // The velocity depends on time only through the wall data.
            let u_t = if a_modulation.is_some() || b_modulation.is_some() {
                sample(t + tau)?.sub(&sample(t - tau)?)?.scale(0.5 / tau)
            } else {
                VectorField::zeros(grid)
            };
            let (_, curl_f) = curl_of_momentum(&u_t, &u)?;
            Ok(Level {
                curl_f,
                cross: None,
                momentum: None,
                ut_consistency: None,
                aperiodicity: None,
            })
        }
        FamilyKind::Box { l1, l2, l3, .. } => {
            let [lo, hi] = cfg.sub_box.unwrap_or_else(|| default_sub_box(spec));
            let nodes = if fine { 2 * n - 1 } else { n };
            let grid = GridSpec::closed_box([nodes; 3], lo, hi, DomainKind::BoxDirichlet)?;
            let green = BoxGreenSpec {
                l1,
                l2,
                l3,
                n_terms: cfg.series_terms,
                tol: f64::INFINITY,
            };
            let q = cfg.quadrature.unwrap_or_else(default_box_quadrature);
            let points: Vec<[f64; 3]> = (0..grid.len()).map(|i| grid.point(i)).collect();
            let sample = |tt: f64| -> Result<VectorField> {
                let (params, _) = spec.box_params(tt).expect("box family");
                to_field(grid, box_velocity(&params, &green, &q, &points)?.velocity)
            };
            let u = sample(t)?;
            let u_t = sample(t + tau)?.sub(&sample(t - tau)?)?.scale(0.5 / tau);
            let (_, curl_f) = curl_of_momentum(&u_t, &u)?;
            Ok(Level {
                curl_f,
                cross: None,
                momentum: None,
                ut_consistency: None,
                aperiodicity: None,
            })
        }
    }
}

fn to_field(grid: GridSpec, v: Vec<[f64; 3]>) -> Result<VectorField> {
    let mut out = VectorField::zeros(grid);
    for (i, u) in v.iter().enumerate() {
        for c in 0..3 {
            out.components[c][i] = u[c];
        }
    }
    out.check_finite("family velocity")?;
    Ok(out)
}

/// Quadrature used by half-space reports when none is configured.
pub fn default_halfspace_quadrature() -> QuadratureSpec {
    let mut q = QuadratureSpec::new(Default::default(), 0.0, 4.0);
    q.volume_nodes = 16;
    q.boundary_nodes = 201;
    q
}

fn default_box_quadrature() -> QuadratureSpec {
    let mut q = QuadratureSpec::new(Default::default(), 0.0, 1.0);
    q.volume_nodes = 16;
    q
}

/// Residual report of a spurt, optionally superposed on a base flow.
pub fn spurt_residual_report(s: &SpurtSpec, cfg: &ReportConfig) -> Result<FamilyReport> {
    s.validate()?;
    cfg.validate()?;
    let entries = cfg
        .t_samples
        .par_iter()
        .map(|&t| {
            let coarse = spurt_level(s, cfg, t, cfg.n)?;
            let fine = spurt_level(s, cfg, t, 2 * cfg.n)?;
            Ok(entry(t, f64::NAN, coarse, fine, 2 * cfg.n))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FamilyReport {
        family: "spurt".into(),
        entries,
    })
}

fn spurt_level(s: &SpurtSpec, cfg: &ReportConfig, t: f64, n: usize) -> Result<Level> {
    let spec = spurt_grid(s, n)?;
    let v = spurt_eval(s, t);
    let u = VectorField::from_fn(spec, |_| v.velocity);
    let u_t = VectorField::from_fn(spec, |_| v.acceleration);
    let (_, curl_f) = curl_of_momentum(&u_t, &u)?;
    let momentum =
        momentum_residual(&u_t, &u, &spurt_pressure(s, t, cfg.rho, spec), cfg.rho)?.residual_max;
    let cross = match cfg.base {
        Some(base) => {
            let n = n + n % 2;
            Some(cross_term(
                v.velocity,
                &base.velocity(GridSpec::periodic_cube(n, cfg.periodic_length)?),
            )?)
        }
        None => None,
    };
    Ok(Level {
        curl_f,
        cross,
        momentum: Some(momentum),
        ut_consistency: None,
        aperiodicity: Some(measure_spurt_aperiodicity(s, t, cfg.rho, n)?),
    })
}
