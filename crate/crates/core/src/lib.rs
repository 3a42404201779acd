// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod berry;
pub mod cli;
pub mod error;
pub mod fft;
pub mod krylov;
pub mod lattice;
pub mod linops;
pub mod loops;
pub mod tangent;
pub mod vortex;

pub use error::{Error, Result};
