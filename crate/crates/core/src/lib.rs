//! Nonlinear splitting gradient methods for unconstrained and
//! equality-constrained optimization.

pub mod acceptance;
pub mod adjoint;
pub mod anderson;
pub mod commands;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod optim_unconstrained;
pub mod problems;
pub mod scenario;
pub mod splitting;
pub mod trace;

pub use error::{Error, Result};
