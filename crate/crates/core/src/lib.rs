//! Exactly solvable two-electron dynamics in a time-dependent harmonic trap, and the
//! density-functional machinery checked against it.

// validation is written as `!(x > 0.0)` so that NaN fails it
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod cm;
pub mod density;
pub mod error;
pub mod grids;
pub mod io;
pub mod ks;
pub mod quadrature;
pub mod radial;
pub mod response;
pub mod rm;
pub mod virial;

pub use error::{Error, Result};
pub use grids::*;
