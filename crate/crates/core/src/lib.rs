//! Continuous-time entropy-regularized linear-quadratic control.
//!
//! The exploratory problem replaces a feedback control by a Gaussian
//! distribution over actions and rewards its entropy at temperature `lambda`.
//! This crate solves it in closed form, simulates the resulting state SDE,
//! computes its moments, and estimates policy values by Monte Carlo.

pub mod closed_form;
pub mod config;
pub mod model;
pub mod moments;
pub mod policy;
pub mod policy_eval;
pub mod report;
pub mod rng;
pub mod sde;
pub mod tolerances;

#[cfg(test)]
mod properties;

pub use closed_form::{QuadraticValue, Solution, SolveError};
pub use model::{CheckedModel, DerivedCoeffs, LqModel, ModelError};
pub use policy::AffineGaussianPolicy;
