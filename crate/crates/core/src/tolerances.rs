//! Shared numerical thresholds.
//!
//! Every comparison against a bound, every case-dispatch test and every
//! degeneracy guard in the crate reads its threshold from here.

/// Absolute slack for comparisons of a scalar against a bound
/// (`rho > assumption_bound`, `R^2 < MN`, `|estimate - V| <= bound`).
pub const BOUND_TOL: f64 = 1e-12;

/// A linear-term denominator this close to zero is reported as degenerate.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

/// Tolerance on the defining conditions of the moment-ODE cases
/// (`A1 = 0`, `B1 = 0`, `A1 + B1^2 = 0`, `2 A1 + B1^2 = 0`).
pub const CASE_TOL: f64 = 1e-10;

/// Inputs whose case conditions are nonzero but below this are routed to the
/// Runge-Kutta integrator instead of a closed form that divides by them.
pub const NEAR_CASE_BOUNDARY: f64 = 1e-4;

/// A simulated state with magnitude above this marks the path as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Number of fixed RK4 steps used by the moment-ODE integrator.
pub const MOMENT_RK4_STEPS: usize = 2048;

/// Default RK4 sub-steps per grid interval for the Doss-Saussman inner ODE.
pub const DEFAULT_ODE_SUBSTEPS: usize = 4;
