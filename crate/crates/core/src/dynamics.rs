//! Pseudo-spectral integration of the (mollified) vorticity equation on the torus,
//! with pressure recovery, the momentum residual and invariant diagnostics.
//!
//! The state is kept as half-spectrum vorticity coefficients. The right-hand side
//! `(w~ . grad) u - (u . grad) w` is evaluated in divergence form
//! `d_j (w~_j u_i - u_j w_i)`, which equals it for solenoidal fields and lets every
//! product be dealiased before the single derivative is applied. Without
//! mollification this is `curl(u x w)`.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::Band;
use crate::grid::{GridSpec, ScalarField, VectorField};
use crate::mollifier::{spatial_multiplier, BumpKernel};
use crate::operators::{self, Differentiator};
use crate::spectral::Spectral;
use crate::summation;
use crate::velocity_recovery::velocity_coefficients;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// How the quadratic term is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearForm {
    /// `d_j (w~_j u_i - u_j w_i)`.
    #[default]
    Conservative,
    /// `(w~ . grad) u - (u . grad) w` from spectral gradients.
    Advective,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "yes")]
    pub dealias_on: bool,
    #[serde(default)]
    pub mollify_delta: f64,
    #[serde(default = "unit")]
    pub rho: f64,
    #[serde(default = "unit")]
    pub cfl_max: f64,
    #[serde(default)]
    pub nonlinear_form: NonlinearForm,
    /// Steps between diagnostic records (the first and last step are always recorded).
    #[serde(default = "default_diag_every")]
    pub diag_every: usize,
    /// Steps between vorticity dumps; 0 disables them.
    #[serde(default)]
    pub snapshot_every: usize,
    /// Abort once `max |w|` exceeds this multiple of its initial value.
    #[serde(default = "default_sup_ratio")]
    pub abort_sup_ratio: f64,
    /// Dealiasing energy fraction above which resolution is reported lost.
    #[serde(default = "default_dealias_fraction")]
    pub resolution_loss_fraction: f64,
}

fn yes() -> bool {
    true
}
fn unit() -> f64 {
    1.0
}
fn default_diag_every() -> usize {
    10
}
fn default_sup_ratio() -> f64 {
    1e6
}
fn default_dealias_fraction() -> f64 {
    0.01
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        SolverConfig {
            dt,
            t_end,
            dealias_on: true,
            mollify_delta: 0.0,
            rho: 1.0,
            cfl_max: 1.0,
            nonlinear_form: NonlinearForm::Conservative,
            diag_every: default_diag_every(),
            snapshot_every: 0,
            abort_sup_ratio: default_sup_ratio(),
            resolution_loss_fraction: default_dealias_fraction(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("t_end", self.t_end),
            ("rho", self.rho),
            ("cfl_max", self.cfl_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::ConfigInvalid(format!(
                    "solver.{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.mollify_delta >= 0.0 && self.mollify_delta.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "solver.mollify_delta must be finite and >= 0, got {}",
                self.mollify_delta
            )));
        }
        if self.diag_every == 0 {
            return Err(Error::ConfigInvalid(
                "solver.diag_every must be >= 1".into(),
            ));
        }
        if !(self.abort_sup_ratio > 1.0) || !(self.resolution_loss_fraction > 0.0) {
            return Err(Error::ConfigInvalid(
                "solver abort thresholds must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of steps that reach `t_end`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round().max(1.0) as usize
    }
}

type Spec3 = [Vec<Complex64>; 3];

fn zeros3(n: usize) -> Spec3 {
    [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]]
}

/// Scratch buffers for one right-hand-side evaluation.
struct Workspace {
    u_hat: Spec3,
    work: Vec<Complex64>,
    fwd: Vec<Complex64>,
    u: [Vec<f64>; 3],
    w: [Vec<f64>; 3],
    wm: [Vec<f64>; 3],
    prod: Vec<f64>,
    grad: [Vec<f64>; 3],
}

impl Workspace {
    fn new(sp: &Spectral) -> Self {
        let n = sp.spec().len();
        let m = sp.spectral_len();
        let r = || [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        Workspace {
            u_hat: zeros3(m),
            work: vec![ZERO; m],
            fwd: vec![ZERO; m],
            u: r(),
            w: r(),
            wm: r(),
            prod: vec![0.0; n],
            grad: r(),
        }
    }
}

/// Magnitudes measured while evaluating the right-hand side at a stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageNorms {
    pub max_u: f64,
    pub max_w: f64,
}

/// Spectral discretization of the vorticity equation for one grid and configuration.
pub struct VorticityOperator {
    sp: Spectral,
    cfg: SolverConfig,
    band: Band,
    multiplier: Option<Vec<f64>>,
    ws: Workspace,
}

impl VorticityOperator {
    pub fn new(spec: GridSpec, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let sp = Spectral::new(spec)?;
        let band = cfg.dealias_on.then(|| sp.band());
        let multiplier = if cfg.mollify_delta > 0.0 {
            Some(spatial_multiplier(
                &spec,
                &BumpKernel::new(cfg.mollify_delta)?,
                cfg.dt,
            )?)
        } else {
            None
        };
        let ws = Workspace::new(&sp);
        Ok(VorticityOperator {
            sp,
            cfg,
            band,
            multiplier,
            ws,
        })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.sp
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Fourier multiplier of the spatial mollifier, when enabled.
    pub fn multiplier(&self) -> Option<&[f64]> {
        self.multiplier.as_deref()
    }

    fn inverse_into(&mut self, coeffs: &[Complex64], out_sel: Target, c: usize) {
        let fft = self.sp.fft();
        self.ws.work.copy_from_slice(coeffs);
        let out = match out_sel {
            Target::U => &mut self.ws.u[c],
            Target::W => &mut self.ws.w[c],
            Target::Wm => &mut self.ws.wm[c],
            Target::Grad => &mut self.ws.grad[c],
        };
        fft.inverse_band_in_place(&mut self.ws.work, out, self.band);
    }

    /// Evaluates the right-hand side for vorticity coefficients `w_hat` into `out`,
    /// measuring `max |u|` and `max |w|` when `measure` is set.
    pub fn rhs(
        &mut self,
        w_hat: &Spec3,
        out: &mut Spec3,
        measure: bool,
    ) -> Result<Option<StageNorms>> {
        velocity_coefficients(&self.sp, w_hat, &mut self.ws.u_hat);
        for c in 0..3 {
            let u = std::mem::take(&mut self.ws.u_hat[c]);
            self.inverse_into(&u, Target::U, c);
            self.ws.u_hat[c] = u;
            self.inverse_into(&w_hat[c], Target::W, c);
        }
        if let Some(m) = self.multiplier.take() {
            for c in 0..3 {
                let mut mw = std::mem::take(&mut self.ws.fwd);
                mw.par_iter_mut()
                    .zip(w_hat[c].par_iter())
                    .zip(m.par_iter())
                    .for_each(|((o, v), f)| *o = *v * *f);
                self.inverse_into(&mw, Target::Wm, c);
                self.ws.fwd = mw;
            }
            self.multiplier = Some(m);
        }

        let norms = measure.then(|| StageNorms {
            max_u: max_norm(&self.ws.u),
            max_w: max_norm(&self.ws.w),
        });
        if norms.is_some_and(|n| !n.max_u.is_finite() || !n.max_w.is_finite()) {
            return Err(Error::NonFinite {
                context: "vorticity right-hand side".into(),
            });
        }

        match (self.cfg.nonlinear_form, self.multiplier.is_some()) {
            (NonlinearForm::Conservative, false) => self.curl_of_u_cross_w(out),
            (NonlinearForm::Conservative, true) => self.flux_divergence(out),
            (NonlinearForm::Advective, mollified) => self.advective(w_hat, mollified, out),
        }
        Ok(norms)
    }

    fn forward_into_fwd(&mut self) {
        self.sp
            .fft()
            .forward_band(&self.ws.prod, &mut self.ws.fwd, self.band);
    }

    /// `curl(u x w)`.
    fn curl_of_u_cross_w(&mut self, out: &mut Spec3) {
        for o in out.iter_mut() {
            o.par_iter_mut().for_each(|v| *v = ZERO);
        }
        for c in 0..3 {
            let (a, b) = ((c + 1) % 3, (c + 2) % 3);
            {
                let (u, w) = (&self.ws.u, &self.ws.w);
                self.ws
                    .prod
                    .par_iter_mut()
                    .zip(u[a].par_iter().zip(&u[b]))
                    .zip(w[a].par_iter().zip(&w[b]))
                    .for_each(|((v, (ua, ub)), (wa, wb))| *v = ua * wb - ub * wa);
            }
            self.forward_into_fwd();
            // (curl P)_a += d_b P_c, (curl P)_b -= d_a P_c
            let sp = &self.sp;
            let f = &self.ws.fwd;
            out[a]
                .par_iter_mut()
                .enumerate()
                .for_each(|(idx, x)| *x += I * f[idx] * sp.derivative_wavenumber(idx)[b]);
            out[b]
                .par_iter_mut()
                .enumerate()
                .for_each(|(idx, y)| *y -= I * f[idx] * sp.derivative_wavenumber(idx)[a]);
        }
    }

    /// `d_j (w~_j u_i - u_j w_i)`.
    fn flux_divergence(&mut self, out: &mut Spec3) {
        for i in 0..3 {
            out[i].par_iter_mut().for_each(|v| *v = ZERO);
            for j in 0..3 {
                {
                    let (u, w, wm) = (&self.ws.u, &self.ws.w, &self.ws.wm);
                    self.ws
                        .prod
                        .par_iter_mut()
                        .zip(wm[j].par_iter().zip(&u[i]))
                        .zip(u[j].par_iter().zip(&w[i]))
                        .for_each(|((v, (wmj, ui)), (uj, wi))| *v = wmj * ui - uj * wi);
                }
                self.forward_into_fwd();
                let sp = &self.sp;
                let f = &self.ws.fwd;
                out[i].par_iter_mut().enumerate().for_each(|(idx, o)| {
                    *o += I * sp.derivative_wavenumber(idx)[j] * f[idx];
                });
            }
        }
    }

    /// `(w~ . grad) u - (u . grad) w` from spectral gradients.
    fn advective(&mut self, w_hat: &Spec3, mollified: bool, out: &mut Spec3) {
        let n = self.ws.prod.len();
        for i in 0..3 {
            let mut acc = vec![0.0; n];
            for j in 0..3 {
                let du: Vec<Complex64> = {
                    let sp = &self.sp;
                    let u = &self.ws.u_hat[i];
                    (0..u.len())
                        .into_par_iter()
                        .map(|idx| I * sp.derivative_wavenumber(idx)[j] * u[idx])
                        .collect()
                };
                self.inverse_into(&du, Target::Grad, 0);
                let dw: Vec<Complex64> = {
                    let sp = &self.sp;
                    let w = &w_hat[i];
                    (0..w.len())
                        .into_par_iter()
                        .map(|idx| I * sp.derivative_wavenumber(idx)[j] * w[idx])
                        .collect()
                };
                self.inverse_into(&dw, Target::Grad, 1);
                let stretch = if mollified {
                    &self.ws.wm[j]
                } else {
                    &self.ws.w[j]
                };
                let (g, u) = (&self.ws.grad, &self.ws.u[j]);
                acc.par_iter_mut()
                    .enumerate()
                    .for_each(|(p, a)| *a += stretch[p] * g[0][p] - u[p] * g[1][p]);
            }
            self.ws.prod.copy_from_slice(&acc);
            self.forward_into_fwd();
            out[i].copy_from_slice(&self.ws.fwd);
        }
    }
}

#[derive(Clone, Copy)]
enum Target {
    U,
    W,
    Wm,
    Grad,
}

fn max_norm(v: &[Vec<f64>; 3]) -> f64 {
    summation::deterministic_max(v[0].len(), |p| {
        (v[0][p] * v[0][p] + v[1][p] * v[1][p] + v[2][p] * v[2][p]).sqrt()
    })
}

// ---------------------------------------------------------------------------
// Stepper

/// Owns the spectral state and advances it with classical RK4.
pub struct Stepper {
    op: VorticityOperator,
    w_hat: Spec3,
    stage: Spec3,
    k: Spec3,
    acc: Spec3,
    carry: Spec3,
    t: f64,
    steps: usize,
    initial_max_w: f64,
    last: Option<StageNorms>,
    pub cfl_warnings: usize,
}

impl Stepper {
    pub fn new(w0: &VectorField, cfg: SolverConfig) -> Result<Self> {
        w0.check_finite("initial vorticity")?;
        let op = VorticityOperator::new(w0.spec, cfg)?;
        let sp = op.spectral();
        let mut w = sp.transform(w0)?;
        if cfg.dealias_on {
            for c in w.coefficients.iter_mut() {
                sp.truncate_in_place(c);
            }
        }
        sp.project_solenoidal(&mut w);
        let m = sp.spectral_len();
        let initial_max_w = w0.max_norm();
        Ok(Stepper {
            op,
            w_hat: w.coefficients,
            stage: zeros3(m),
            k: zeros3(m),
            acc: zeros3(m),
            carry: zeros3(m),
            t: 0.0,
            steps: 0,
            initial_max_w,
            last: None,
            cfl_warnings: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn config(&self) -> &SolverConfig {
        self.op.config()
    }

    pub fn spectral(&self) -> &Spectral {
        self.op.spectral()
    }

    pub fn vorticity_hat(&self) -> &[Vec<Complex64>; 3] {
        &self.w_hat
    }

    /// Norms measured at the first stage of the most recent step.
    pub fn last_norms(&self) -> Option<StageNorms> {
        self.last
    }

    pub fn initial_max_vorticity(&self) -> f64 {
        self.initial_max_w
    }

    pub fn vorticity(&self) -> VectorField {
        let sp = self.op.spectral();
        VectorField {
            spec: *sp.spec(),
            components: [0, 1, 2].map(|c| sp.inverse(&self.w_hat[c])),
        }
    }

    pub fn velocity(&self) -> VectorField {
        let sp = self.op.spectral();
        let mut u = zeros3(sp.spectral_len());
        velocity_coefficients(sp, &self.w_hat, &mut u);
        VectorField {
            spec: *sp.spec(),
            components: u.map(|c| sp.inverse(&c)),
        }
    }

    /// One RK4 step. The increment is projected onto solenoidal fields and added
    /// to the state with compensated summation.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.op.config().dt;
        let h = self.op.spectral().spec().min_spacing();
        let cfl_max = self.op.config().cfl_max;

        let norms = self
            .op
            .rhs(&self.w_hat, &mut self.k, true)?
            .expect("measured stage");
        let cfl = dt * norms.max_u / h;
        if cfl > 2.0 * cfl_max {
            return Err(Error::CflExceeded { cfl, cfl_max });
        }
        if cfl > cfl_max {
            self.cfl_warnings += 1;
        }
        self.last = Some(norms);

        scale_into(&mut self.acc, &self.k, dt / 6.0);
        combine(&mut self.stage, &self.w_hat, &self.k, 0.5 * dt);
        self.op.rhs(&self.stage, &mut self.k, false)?;
        axpy(&mut self.acc, &self.k, dt / 3.0);
        combine(&mut self.stage, &self.w_hat, &self.k, 0.5 * dt);
        self.op.rhs(&self.stage, &mut self.k, false)?;
        axpy(&mut self.acc, &self.k, dt / 3.0);
        combine(&mut self.stage, &self.w_hat, &self.k, dt);
        self.op.rhs(&self.stage, &mut self.k, false)?;
        axpy(&mut self.acc, &self.k, dt / 6.0);

        let sp = self.op.spectral();
        let [x, y, z] = &mut self.acc;
        project3(sp, x, y, z);
        for c in 0..3 {
            self.w_hat[c]
                .par_iter_mut()
                .zip(self.carry[c].par_iter_mut())
                .zip(self.acc[c].par_iter())
                .for_each(|((w, e), d)| {
                    let y = *d - *e;
                    let t = *w + y;
                    *e = (t - *w) - y;
                    *w = t;
                });
        }
        self.steps += 1;
        self.t = self.steps as f64 * dt;
        Ok(())
    }

    /// Diagnostic record of the current state (time moments left at zero; see [`fill_time_moments`]).
    pub fn diagnostics(&self) -> Result<DiagnosticRecord> {
        spectral_diagnostics(self.op.spectral(), &self.w_hat, self.t, self.op.band)
    }
}

fn scale_into(out: &mut Spec3, k: &Spec3, s: f64) {
    for c in 0..3 {
        out[c]
            .par_iter_mut()
            .zip(k[c].par_iter())
            .for_each(|(o, d)| *o = d * s);
    }
}

/// `out = base + s * k`.
fn combine(out: &mut Spec3, base: &Spec3, k: &Spec3, s: f64) {
    for c in 0..3 {
        out[c]
            .par_iter_mut()
            .zip(base[c].par_iter())
            .zip(k[c].par_iter())
            .for_each(|((o, b), d)| *o = b + d * s);
    }
}

fn axpy(out: &mut Spec3, k: &Spec3, s: f64) {
    for c in 0..3 {
        out[c]
            .par_iter_mut()
            .zip(k[c].par_iter())
            .for_each(|(o, d)| *o += d * s);
    }
}

fn project3(sp: &Spectral, x: &mut [Complex64], y: &mut [Complex64], z: &mut [Complex64]) {
    x.par_iter_mut()
        .zip(y.par_iter_mut())
        .zip(z.par_iter_mut())
        .enumerate()
        .for_each(|(idx, ((x, y), z))| {
            let k = sp.derivative_wavenumber(idx);
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

/// Right-hand side of the vorticity equation for a physical field.
pub fn vorticity_rhs(w: &VectorField, cfg: &SolverConfig) -> Result<VectorField> {
    w.check_finite("vorticity")?;
    let mut op = VorticityOperator::new(w.spec, *cfg)?;
    let sp = op.spectral().clone();
    let mut w_hat = sp.transform(w)?.coefficients;
    if cfg.dealias_on {
        for c in w_hat.iter_mut() {
            sp.truncate_in_place(c);
        }
    }
    let mut out = zeros3(sp.spectral_len());
    let norms = op.rhs(&w_hat, &mut out, true)?.expect("measured stage");
    let h = sp.spec().min_spacing();
    let cfl = cfg.dt * norms.max_u / h;
    if cfl > 2.0 * cfg.cfl_max {
        return Err(Error::CflExceeded {
            cfl,
            cfl_max: cfg.cfl_max,
        });
    }
    Ok(VectorField {
        spec: w.spec,
        components: out.map(|c| sp.inverse(&c)),
    })
}

/// One RK4 step of a physical field.
pub fn step_rk4(w: &VectorField, cfg: &SolverConfig) -> Result<VectorField> {
    let mut s = Stepper::new(w, *cfg)?;
    s.step()?;
    Ok(s.vorticity())
}

// ---------------------------------------------------------------------------
// Pressure and momentum

/// Zero-mean pressure with `laplacian(p) = -rho sum_ij d_i u_j d_j u_i`.
pub fn pressure_from_velocity(u: &VectorField, rho: f64) -> Result<ScalarField> {
    u.check_finite("velocity")?;
    let sp = Spectral::new(u.spec)?;
    let d = Differentiator::Spectral(Box::new(sp.clone()));
    let jac = d.jacobian(u);
    let n = u.spec.len();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|p| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += jac[j][i][p] * jac[i][j][p];
                }
            }
            -rho * s
        })
        .collect();
    let rhs = ScalarField::from_values(u.spec, values)?;
    operators::poisson_solve_with(&sp, &rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentumResidual {
    /// `max |u_t + (u . grad) u + grad(p) / rho|`.
    pub residual_max: f64,
    /// `max |curl(u_t + (u . grad) u)|`: zero exactly when some pressure can balance the flow.
    pub curl_max: f64,
}

pub fn momentum_residual(
    u_t: &VectorField,
    u: &VectorField,
    p: &ScalarField,
    rho: f64,
) -> Result<MomentumResidual> {
    if u_t.spec != u.spec || p.spec != u.spec {
        return Err(Error::GridMismatch);
    }
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::BadParam(format!("rho must be positive, got {rho}")));
    }
    u_t.check_finite("u_t")?;
    u.check_finite("u")?;
    p.check_finite("p")?;
    let f = u_t.add(&operators::advect(u, u)?)?;
    let grad_p = operators::gradient(p)?;
    let residual = f.axpy(1.0 / rho, &grad_p)?;
    let curl_f = operators::curl(&f)?;
    Ok(MomentumResidual {
        residual_max: residual.max_norm(),
        curl_max: curl_f.max_norm(),
    })
}

// ---------------------------------------------------------------------------
// Diagnostics

/// Multi-indices `alpha` with `1 <= |alpha| <= 2`, in CSV column order.
pub const MULTI_INDICES: [[u32; 3]; 9] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [2, 0, 0],
    [1, 1, 0],
    [1, 0, 1],
    [0, 2, 0],
    [0, 1, 1],
    [0, 0, 2],
];

pub const CSV_HEADER: &str = "t,energy,enstrophy,intV,intV_dx,intV_dy,intV_dz,intV_dxx,intV_dxy,intV_dxz,intV_dyy,intV_dyz,intV_dzz,intV_dt,intV_dtt,supV,max_div_u,max_div_w,dealias_energy_frac";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub energy: f64,
    pub enstrophy: f64,
    /// Integral of `V = w_x + w_y + w_z`.
    pub total_vorticity_integral: f64,
    /// Integrals of `d^alpha V` for [`MULTI_INDICES`].
    pub moment_integrals: [f64; 9],
    /// Integrals of `d_t V` and `d_tt V` from finite differences over records.
    pub dtv_integrals: [f64; 2],
    pub sup_v: f64,
    pub max_div_u: f64,
    pub max_div_w: f64,
    /// Fraction of kinetic energy in the outer third of the retained band.
    pub dealias_energy_frac: f64,
}

impl DiagnosticRecord {
    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.t,
            self.energy,
            self.enstrophy,
            self.total_vorticity_integral,
        ];
        v.extend_from_slice(&self.moment_integrals);
        v.extend_from_slice(&self.dtv_integrals);
        v.extend_from_slice(&[
            self.sup_v,
            self.max_div_u,
            self.max_div_w,
            self.dealias_energy_frac,
        ]);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// Diagnostics of a physical periodic vorticity field at time `t`.
pub fn diagnostics(w: &VectorField, t: f64) -> Result<DiagnosticRecord> {
    w.check_finite("vorticity")?;
    let sp = Spectral::new(w.spec)?;
    let w_hat = sp.transform(w)?.coefficients;
    spectral_diagnostics(&sp, &w_hat, t, None)
}

fn spectral_diagnostics(
    sp: &Spectral,
    w_hat: &Spec3,
    t: f64,
    band: Band,
) -> Result<DiagnosticRecord> {
    let spec = *sp.spec();
    let m = sp.spectral_len();
    let vol = spec.volume();
    let mut u_hat = zeros3(m);
    velocity_coefficients(sp, w_hat, &mut u_hat);

    let parseval = |f: &Spec3, select: &(dyn Fn(usize) -> bool + Sync)| {
        summation::deterministic_sum(m, |idx| {
            if !select(idx) {
                return 0.0;
            }
            sp.parseval_weight(idx)
                * (f[0][idx].norm_sqr() + f[1][idx].norm_sqr() + f[2][idx].norm_sqr())
        })
    };
    let all = |_: usize| true;
    let e_total = parseval(&u_hat, &all);
    let energy = 0.5 * vol * e_total;
    let enstrophy = vol * parseval(w_hat, &all);
    let cut = sp.band();
    let outer = |idx: usize| {
        let mi = sp.mode_index(idx);
        (0..3).any(|a| cut[a] > 0 && 3 * mi[a].unsigned_abs() as usize > 2 * cut[a])
    };
    let dealias_energy_frac = if e_total > 0.0 {
        parseval(&u_hat, &outer) / e_total
    } else {
        0.0
    };

    let fft = sp.fft();
    let mut work = Vec::with_capacity(m);
    let mut phys = vec![0.0; spec.len()];
    let v_hat: Vec<Complex64> = (0..m)
        .into_par_iter()
        .map(|i| w_hat[0][i] + w_hat[1][i] + w_hat[2][i])
        .collect();
    fft.inverse_band(&v_hat, &mut phys, &mut work, band);
    let h = spec.spacing();
    let cell = h[0] * h[1] * h[2];
    let total_vorticity_integral = summation::sum_slice(&phys) * cell;
    let sup_v = summation::max_abs(&phys);

    let mut moment_integrals = [0.0; 9];
    for (slot, alpha) in moment_integrals.iter_mut().zip(MULTI_INDICES) {
        let d = sp.multi_derivative(&v_hat, alpha);
        fft.inverse_band(&d, &mut phys, &mut work, band);
        *slot = summation::sum_slice(&phys) * cell;
    }

    let mut div_max = |f: &Spec3| {
        let d: Vec<Complex64> = (0..m)
            .into_par_iter()
            .map(|idx| {
                let k = sp.derivative_wavenumber(idx);
                I * (f[0][idx] * k[0] + f[1][idx] * k[1] + f[2][idx] * k[2])
            })
            .collect();
        fft.inverse_band(&d, &mut phys, &mut work, band);
        summation::max_abs(&phys)
    };
    let max_div_u = div_max(&u_hat);
    let max_div_w = div_max(w_hat);

    let rec = DiagnosticRecord {
        t,
        energy,
        enstrophy,
        total_vorticity_integral,
        moment_integrals,
        dtv_integrals: [0.0; 2],
        sup_v,
        max_div_u,
        max_div_w,
        dealias_energy_frac,
    };
    if !rec.is_finite() {
        return Err(Error::NonFinite {
            context: "diagnostics".into(),
        });
    }
    Ok(rec)
}

/// Fills the time-derivative moments by three-point finite differences over the
/// record times: central in the interior, one-sided at the two ends.
pub fn fill_time_moments(records: &mut [DiagnosticRecord]) -> Result<()> {
    let n = records.len();
    if n < 3 {
        return Err(Error::InsufficientHistory { needed: 3, have: n });
    }
    let t: Vec<f64> = records.iter().map(|r| r.t).collect();
    let v: Vec<f64> = records.iter().map(|r| r.total_vorticity_integral).collect();
    for i in 0..n {
        let c = i.clamp(1, n - 2);
        let (t0, t1, t2) = (t[c - 1], t[c], t[c + 1]);
        let (v0, v1, v2) = (v[c - 1], v[c], v[c + 1]);
        let x = t[i];
        // Derivatives of the quadratic interpolant through the three points.
        let d0 = (t0 - t1) * (t0 - t2);
        let d1 = (t1 - t0) * (t1 - t2);
        let d2 = (t2 - t0) * (t2 - t1);
        let first = v0 * ((x - t1) + (x - t2)) / d0
            + v1 * ((x - t0) + (x - t2)) / d1
            + v2 * ((x - t0) + (x - t1)) / d2;
        let second = 2.0 * (v0 / d0 + v1 / d1 + v2 / d2);
        records[i].dtv_integrals = [first, second];
    }
    Ok(())
}

pub fn write_diagnostics_csv<W: Write>(mut w: W, records: &[DiagnosticRecord]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        let line: Vec<String> = r.values().iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Driver

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<DiagnosticRecord>,
    pub steps: usize,
    pub final_time: f64,
    /// Reason the run stopped early, if it did.
    pub abort: Option<String>,
    /// First recorded time at which the dealiasing energy fraction exceeded its threshold.
    pub resolution_loss_time: Option<f64>,
    pub cfl_warnings: usize,
}

/// Integrates to `t_end`, recording diagnostics every `diag_every` steps and calling
/// `on_snapshot(step, t, stepper)` every `snapshot_every` steps.
pub fn run(
    w0: &VectorField,
    cfg: &SolverConfig,
    mut on_snapshot: impl FnMut(usize, f64, &Stepper) -> Result<()>,
) -> Result<RunOutput> {
    let mut s = Stepper::new(w0, *cfg)?;
    let n = cfg.n_steps();
    let mut records = vec![s.diagnostics()?];
    let mut resolution_loss_time = None;
    let mut abort = None;
    let note_resolution = |r: &DiagnosticRecord, slot: &mut Option<f64>| {
        if slot.is_none() && r.dealias_energy_frac > cfg.resolution_loss_fraction {
            *slot = Some(r.t);
        }
    };
    note_resolution(&records[0], &mut resolution_loss_time);
    if cfg.snapshot_every > 0 {
        on_snapshot(0, 0.0, &s)?;
    }
    for step in 1..=n {
        match s.step() {
            Ok(()) => {}
            Err(Error::NonFinite { .. }) => {
                abort = Some(format!("non-finite vorticity at t = {}", s.time()));
                break;
            }
            Err(e) => return Err(e),
        }
        if let Some(norms) = s.last_norms() {
            if norms.max_w > cfg.abort_sup_ratio * s.initial_max_vorticity() {
                abort = Some(format!(
                    "max |w| = {:e} exceeds {:e} times its initial value at t = {}",
                    norms.max_w,
                    cfg.abort_sup_ratio,
                    s.time()
                ));
                break;
            }
        }
        if step % cfg.diag_every == 0 || step == n {
            match s.diagnostics() {
                Ok(r) => {
                    note_resolution(&r, &mut resolution_loss_time);
                    records.push(r);
                }
                Err(Error::NonFinite { .. }) => {
                    abort = Some(format!("non-finite diagnostics at t = {}", s.time()));
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if cfg.snapshot_every > 0 && step % cfg.snapshot_every == 0 {
            on_snapshot(step, s.time(), &s)?;
        }
    }
    if records.len() >= 3 {
        fill_time_moments(&mut records)?;
    }
    Ok(RunOutput {
        records,
        steps: s.steps(),
        final_time: s.time(),
        abort,
        resolution_loss_time,
        cfl_warnings: s.cfl_warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows;
    use std::f64::consts::PI;

    fn cube(n: usize) -> GridSpec {
        GridSpec::periodic_cube(n, 2.0 * PI).unwrap()
    }

    #[test]
    fn abc_rhs_vanishes() {
        let spec = cube(32);
        let w = flows::abc(spec, 1.0, 1.0, 1.0);
        let r = vorticity_rhs(&w, &SolverConfig::new(1e-3, 1.0)).unwrap();
        assert!(r.max_abs() < 1e-10, "{}", r.max_abs());
    }

    #[test]
    fn forms_agree_with_and_without_mollification() {
        let spec = cube(16);
        let w = flows::random_band_limited_vorticity(spec, 3, 11, 1.0).unwrap();
        for delta in [0.0, 0.6] {
            let mut cfg = SolverConfig::new(1e-2, 1.0);
            cfg.mollify_delta = delta;
            let a = vorticity_rhs(&w, &cfg).unwrap();
            cfg.nonlinear_form = NonlinearForm::Advective;
            let b = vorticity_rhs(&w, &cfg).unwrap();
            let diff = a.sub(&b).unwrap().max_abs();
            assert!(diff < 1e-12 * a.max_abs().max(1.0), "delta {delta}: {diff}");
        }
    }

    #[test]
    fn two_dimensional_rhs_is_pure_advection() {
        let spec = cube(32);
        let w = flows::taylor_green_2d_vorticity(spec);
        let u = flows::taylor_green_2d_velocity(spec);
        let r = vorticity_rhs(&w, &SolverConfig::new(1e-3, 1.0)).unwrap();
        let adv = operators::advect(&u, &w).unwrap();
        let err = (0..spec.len())
            .map(|p| (r.components[2][p] + adv.components[2][p]).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        assert!(r.components[0]
            .iter()
            .chain(&r.components[1])
            .all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn zero_field_stays_zero() {
        let spec = cube(8);
        let z = VectorField::zeros(spec);
        let out = step_rk4(&z, &SolverConfig::new(0.1, 1.0)).unwrap();
        assert!(out.max_abs() == 0.0);
    }

    #[test]
    fn tg2d_pressure() {
        let spec = cube(32);
        let p = pressure_from_velocity(&flows::taylor_green_2d_velocity(spec), 1.3).unwrap();
        let exact = flows::taylor_green_2d_pressure(spec, 1.3);
        assert!(p.sub(&exact).unwrap().max_abs() < 1e-11);
    }

    #[test]
    fn time_moments_of_quadratic_are_exact() {
        let mut recs: Vec<DiagnosticRecord> = (0..5)
            .map(|i| {
                let t = 0.1 * i as f64;
                DiagnosticRecord {
                    t,
                    energy: 0.0,
                    enstrophy: 0.0,
                    total_vorticity_integral: 1.0 + 2.0 * t + 3.0 * t * t,
                    moment_integrals: [0.0; 9],
                    dtv_integrals: [0.0; 2],
                    sup_v: 0.0,
                    max_div_u: 0.0,
                    max_div_w: 0.0,
                    dealias_energy_frac: 0.0,
                }
            })
            .collect();
        fill_time_moments(&mut recs).unwrap();
        for r in &recs {
            assert!((r.dtv_integrals[0] - (2.0 + 6.0 * r.t)).abs() < 1e-12);
            assert!((r.dtv_integrals[1] - 6.0).abs() < 1e-10);
        }
        assert!(matches!(
            fill_time_moments(&mut recs[..2]),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn cfl_violation_is_an_error() {
        let spec = cube(16);
        let w = flows::abc(spec, 1.0, 1.0, 1.0);
        let cfg = SolverConfig::new(1.0, 1.0);
        assert!(matches!(
            vorticity_rhs(&w, &cfg),
            Err(Error::CflExceeded { .. })
        ));
    }
}
