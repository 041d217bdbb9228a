//! Verification toolkit for the incompressible Euler equations in vorticity form:
//! spectral evolution on the torus, velocity recovery on bounded and unbounded
//! domains, mollification, closed-form families and a paired-run uniqueness monitor.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod families;
pub mod fft;
pub mod flows;
pub mod grid;
pub mod mollifier;
pub mod operators;
pub mod plot;
pub mod spectral;
pub mod summation;
pub mod uniqueness;
pub mod velocity_recovery;

pub use error::{Error, Result};
pub use grid::{DomainKind, GridSpec, ScalarField, VectorField};
