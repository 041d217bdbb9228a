//! Paired evolution of two vorticity fields and the Gronwall enstrophy bound on
//! their difference.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SolverConfig, Stepper};
use crate::error::{Error, Result};
use crate::grid::VectorField;
use crate::spectral::Spectral;
use crate::summation;
use crate::velocity_recovery::velocity_coefficients;

/// Constants of the bound. None of them is fixed by the underlying estimates; all default to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallConstants {
    /// Multiplier of `||w2||_inf` in `A0`.
    #[serde(default = "one")]
    pub c: f64,
    /// `C'_1 .. C'_4` of the bounded-domain coefficient.
    #[serde(default = "ones")]
    pub c_prime: [f64; 4],
    /// Relative slack allowed when checking the bound.
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn one() -> f64 {
    1.0
}
fn ones() -> [f64; 4] {
    [1.0; 4]
}
fn default_slack() -> f64 {
    0.05
}

impl Default for GronwallConstants {
    fn default() -> Self {
        GronwallConstants {
            c: 1.0,
            c_prime: [1.0; 4],
            slack: default_slack(),
        }
    }
}

impl GronwallConstants {
    pub fn validate(&self) -> Result<()> {
        if !self.c.is_finite() || !self.c_prime.iter().all(|v| v.is_finite()) {
            return Err(Error::ConfigInvalid(
                "Gronwall constants must be finite".into(),
            ));
        }
        if !(self.slack >= 0.0 && self.slack.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "slack must be finite and >= 0, got {}",
                self.slack
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallTrace {
    pub t: f64,
    /// `||w1 - w2||^2` in L2.
    pub phi_norm_sq: f64,
    /// `||grad u1||_inf + C ||w2||_inf`.
    pub a0: f64,
    pub integral_a0: f64,
    /// `||phi(0)||^2 exp(2 integral_a0)`.
    pub bound: f64,
    pub satisfied: bool,
    pub u1_l3: f64,
    /// Pointwise Frobenius norm of the velocity gradient, maximized over the grid.
    pub grad_u1_linf: f64,
    pub w2_linf: f64,
    pub grad_w2_l3: f64,
    /// `2 (C'1 ||grad u1||_inf - C'2 ||u1||_3 + C'3 ||w2||_inf - C'4 ||grad w2||_3)` with
    /// the configured (unspecified) constants.
    pub a_finite: f64,
}

pub const TRACE_CSV_HEADER: &str =
    "t,phi_norm_sq,a0,integral_a0,bound,satisfied,u1_L3,grad_u1_Linf,w2_Linf,grad_w2_L3,a_finite_unspecified_constants";

pub fn write_trace_csv<W: Write>(mut w: W, trace: &[GronwallTrace]) -> Result<()> {
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for r in trace {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t,
            r.phi_norm_sq,
            r.a0,
            r.integral_a0,
            r.bound,
            r.satisfied as u8,
            r.u1_l3,
            r.grad_u1_linf,
            r.w2_linf,
            r.grad_w2_l3,
            r.a_finite
        )?;
    }
    Ok(())
}

type Spec3 = [Vec<Complex64>; 3];

fn inverse3(sp: &Spectral, c: &Spec3) -> [Vec<f64>; 3] {
    [0, 1, 2].map(|i| sp.inverse(&c[i]))
}

/// `J[i][j] = d_j f_i` in physical space.
fn jacobian(sp: &Spectral, c: &Spec3) -> [[Vec<f64>; 3]; 3] {
    [0, 1, 2].map(|i| [0, 1, 2].map(|j| sp.inverse(&sp.derivative(&c[i], j))))
}

fn frobenius(j: &[[Vec<f64>; 3]; 3], p: usize) -> f64 {
    let mut s = 0.0;
    for row in j {
        for v in row {
            s += v[p] * v[p];
        }
    }
    s.sqrt()
}

fn magnitude(v: &[Vec<f64>; 3], p: usize) -> f64 {
    (v[0][p] * v[0][p] + v[1][p] * v[1][p] + v[2][p] * v[2][p]).sqrt()
}

fn dealiased(sp: &Spectral, w: &VectorField, dealias: bool) -> Result<Spec3> {
    let mut c = sp.transform(w)?.coefficients;
    if dealias {
        for x in c.iter_mut() {
            sp.truncate_in_place(x);
        }
    }
    Ok(c)
}

/// `(phi . grad) u1 - (u1 . grad) phi + (w2 . grad) psi - (psi . grad) w2` with
/// `phi = w1 - w2` and `psi = u1 - u2`. Products are dealiased when `cfg.dealias_on`.
pub fn difference_rhs(
    w1: &VectorField,
    w2: &VectorField,
    cfg: &SolverConfig,
) -> Result<VectorField> {
    if w1.spec != w2.spec {
        return Err(Error::GridMismatch);
    }
    w1.check_finite("w1")?;
    w2.check_finite("w2")?;
    let sp = Spectral::new(w1.spec)?;
    let m = sp.spectral_len();
    let zero = || {
        [
            vec![Complex64::new(0.0, 0.0); m],
            vec![Complex64::new(0.0, 0.0); m],
            vec![Complex64::new(0.0, 0.0); m],
        ]
    };
    let w1h = dealiased(&sp, w1, cfg.dealias_on)?;
    let w2h = dealiased(&sp, w2, cfg.dealias_on)?;
    let (mut u1h, mut u2h) = (zero(), zero());
    velocity_coefficients(&sp, &w1h, &mut u1h);
    velocity_coefficients(&sp, &w2h, &mut u2h);
    let diff = |a: &Spec3, b: &Spec3| -> Spec3 {
        [0, 1, 2].map(|c| a[c].iter().zip(&b[c]).map(|(x, y)| x - y).collect())
    };
    let phih = diff(&w1h, &w2h);
    let psih = diff(&u1h, &u2h);

    let (phi, u1, w2p, psi) = (
        inverse3(&sp, &phih),
        inverse3(&sp, &u1h),
        inverse3(&sp, &w2h),
        inverse3(&sp, &psih),
    );
    let (du1, dphi, dpsi, dw2) = (
        jacobian(&sp, &u1h),
        jacobian(&sp, &phih),
        jacobian(&sp, &psih),
        jacobian(&sp, &w2h),
    );
    let n = w1.spec.len();
    let components = [0, 1, 2].map(|i| {
        let raw: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|p| {
                let mut s = 0.0;
                for j in 0..3 {
                    s += phi[j][p] * du1[i][j][p] - u1[j][p] * dphi[i][j][p]
                        + w2p[j][p] * dpsi[i][j][p]
                        - psi[j][p] * dw2[i][j][p];
                }
                s
            })
            .collect();
        if cfg.dealias_on {
            let mut c = sp.forward(&raw);
            sp.truncate_in_place(&mut c);
            sp.inverse(&c)
        } else {
            raw
        }
    });
    Ok(VectorField {
        spec: w1.spec,
        components,
    })
}

struct Norms {
    phi_norm_sq: f64,
    u1_l3: f64,
    grad_u1_linf: f64,
    w2_linf: f64,
    grad_w2_l3: f64,
}

fn pair_norms(sp: &Spectral, w1h: &Spec3, w2h: &Spec3) -> Norms {
    let spec = sp.spec();
    let m = sp.spectral_len();
    let vol = spec.volume();
    let cell = vol / spec.len() as f64;
    let phi_norm_sq = vol
        * summation::deterministic_sum(m, |idx| {
            let mut s = 0.0;
            for c in 0..3 {
                s += (w1h[c][idx] - w2h[c][idx]).norm_sqr();
            }
            sp.parseval_weight(idx) * s
        });
    let mut u1h = [
        vec![Complex64::new(0.0, 0.0); m],
        vec![Complex64::new(0.0, 0.0); m],
        vec![Complex64::new(0.0, 0.0); m],
    ];
    velocity_coefficients(sp, w1h, &mut u1h);
    let u1 = inverse3(sp, &u1h);
    let du1 = jacobian(sp, &u1h);
    let w2 = inverse3(sp, w2h);
    let dw2 = jacobian(sp, w2h);
    let n = spec.len();
    let u1_l3 = (cell * summation::deterministic_sum(n, |p| magnitude(&u1, p).powi(3))).cbrt();
    let grad_w2_l3 =
        (cell * summation::deterministic_sum(n, |p| frobenius(&dw2, p).powi(3))).cbrt();
    Norms {
        phi_norm_sq,
        u1_l3,
        grad_u1_linf: summation::deterministic_max(n, |p| frobenius(&du1, p)),
        w2_linf: summation::deterministic_max(n, |p| magnitude(&w2, p)),
        grad_w2_l3,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairedOutput {
    pub trace: Vec<GronwallTrace>,
    /// Set when either solution stopped early.
    pub abort: Option<String>,
}

/// Steps both fields with the same configuration up to `cfg.t_end`, recording a
/// trace entry after every step.
pub fn run_paired(
    w1_0: &VectorField,
    w2_0: &VectorField,
    cfg: &SolverConfig,
    k: &GronwallConstants,
) -> Result<PairedOutput> {
    if w1_0.spec != w2_0.spec {
        return Err(Error::GridMismatch);
    }
    k.validate()?;
    let mut s1 = Stepper::new(w1_0, *cfg)?;
    let mut s2 = Stepper::new(w2_0, *cfg)?;
    let sp = s1.spectral().clone();
    let mut trace: Vec<GronwallTrace> = Vec::new();
    let mut phi0 = 0.0;
    let mut abort = None;
    let record =
        |t: f64, s1: &Stepper, s2: &Stepper, trace: &mut Vec<GronwallTrace>, phi0: &mut f64| {
            let n = pair_norms(&sp, s1.vorticity_hat(), s2.vorticity_hat());
            let a0 = n.grad_u1_linf + k.c * n.w2_linf;
            let integral_a0 = match trace.last() {
                Some(prev) => prev.integral_a0 + 0.5 * (t - prev.t) * (prev.a0 + a0),
                None => {
                    *phi0 = n.phi_norm_sq;
                    0.0
                }
            };
            let bound = *phi0 * (2.0 * integral_a0).exp();
            let c = k.c_prime;
            trace.push(GronwallTrace {
                t,
                phi_norm_sq: n.phi_norm_sq,
                a0,
                integral_a0,
                bound,
                satisfied: n.phi_norm_sq <= bound * (1.0 + k.slack),
                u1_l3: n.u1_l3,
                grad_u1_linf: n.grad_u1_linf,
                w2_linf: n.w2_linf,
                grad_w2_l3: n.grad_w2_l3,
                a_finite: 2.0
                    * (c[0] * n.grad_u1_linf - c[1] * n.u1_l3 + c[2] * n.w2_linf
                        - c[3] * n.grad_w2_l3),
            });
        };
    record(0.0, &s1, &s2, &mut trace, &mut phi0);
    for _ in 0..cfg.n_steps() {
        let (r1, r2) = rayon::join(|| s1.step(), || s2.step());
        match (r1, r2) {
            (Ok(()), Ok(())) => {}
            (Err(Error::NonFinite { .. }), _) | (_, Err(Error::NonFinite { .. })) => {
                abort = Some(format!("non-finite vorticity at t = {}", s1.time()));
                break;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
        record(s1.time(), &s1, &s2, &mut trace, &mut phi0);
    }
    Ok(PairedOutput { trace, abort })
}
