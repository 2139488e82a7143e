//! Optimal control of the Caginalp phase-field system.
//!
//! The crate solves the coupled temperature / order-parameter equations with
//! regular, logarithmic, rational or (Yosida-regularized) obstacle
//! potentials, evaluates the interface-tracking cost, computes exact discrete
//! gradients through the adjoint system and minimizes the cost over a box of
//! admissible controls by projected gradient descent. The [`verify`] module
//! holds the independent oracles and audits used by the test suites and the
//! `audit` CLI mode.

pub mod adjoint;
pub mod config;
pub mod error;
pub mod export;
pub mod grid;
pub mod linalg;
pub mod objective;
pub mod optimizer;
pub mod potentials;
pub mod scenario;
pub mod sensitivity;
pub mod state;
pub mod verify;

pub use error::{Error, Result};
