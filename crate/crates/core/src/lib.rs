//! Numerical engine for moment operators, spectral gaps, and
//! design-formation depth bounds of random quantum circuits on small
//! qudit systems.
//!
//! The crate builds t-th moment operators of discrete gate ensembles and
//! circuit layers exactly, projects onto the permutation-state invariant
//! subspace, and evaluates the closed-form depth bounds and operator
//! inequalities that relate local randomness to global design formation.

extern crate blas_src as _;

pub mod arch;
pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod frame;
pub mod gates;
pub mod gateset;
pub mod linalg;
pub mod moment;
pub mod report;

pub use error::{Error, Result};
pub use linalg::{CMatrix, Limits};
