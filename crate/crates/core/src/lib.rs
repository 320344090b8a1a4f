//! Quantum break-time toolkit for attractive bosonic models.
//!
//! The crate builds truncated Fock-space Hamiltonians, propagates states with
//! an error-controlled Lanczos propagator, extracts break-times from the
//! condensate occupation, and fits scaling laws to the results. The
//! [`analytics`] module collects the closed-form estimates that the
//! simulations are compared against.

pub mod analytics;
pub mod basis;
pub mod error;
pub mod fitting;
pub mod krylov;
pub mod model;
pub mod observables;
pub mod params;
pub mod scan;

pub use basis::{Basis, FockState};
pub use error::{Error, Result};
pub use model::SparseHamiltonian;
pub use params::{ModelKind, ModelParams};
