//! Nonlinear-solver toolkit: Newton's method with cubic line search and
//! dogleg trust region, accelerated by a learned nonlinear
//! right-preconditioner (a fixed-point neural operator).
//!
//! The crate is organized bottom-up:
//! - [`mesh`], [`fem`], [`dof`], [`transfer`]: structured grids, reference
//!   elements, boundary bookkeeping, inter-mesh transfer;
//! - [`sparse`]: CSR storage, direct LU, vector kernels;
//! - [`problems`]: the nonlinear Poisson and Neo-Hookean benchmarks;
//! - [`grf`]: Gaussian random fields for forcings and initial guesses;
//! - [`nn`]: the dense network engine, SE-ResNet blocks, the MIONet
//!   backbone, and the fixed-point operator head;
//! - [`train`]: snapshot datasets, relative-MSE loss, AdamW, persistence;
//! - [`solver`]: Newton-LS, Newton-TR, incremental loading, and the
//!   neural-preconditioned variants with convergence reporting.

pub mod dof;
pub mod error;
pub mod fem;
pub mod grf;
pub mod mesh;
pub mod nn;
pub mod problems;
pub mod solver;
pub mod sparse;
pub mod train;
pub mod transfer;

pub use error::{Error, Result};
