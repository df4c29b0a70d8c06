//! First and second moments of the closed-loop state under an affine Gaussian
//! feedback.
//!
//! With `dX = (A1 X + A2) dt + sqrt((B1 X + B2)^2 + C1) dW` the mean
//! `n(t) = E[X_t]` and second moment `m(t) = E[X_t^2]` solve
//!
//! ```text
//! n' = A1 n + A2
//! m' = (2 A1 + B1^2) m + 2 (A2 + B1 B2) n + B2^2 + C1
//! ```
//!
//! with `n(0) = x0`, `m(0) = x0^2`. The classical second moment `m_hat` is the
//! same ODE with `C1 = 0`. Five closed forms cover the resonance structure of
//! the exponents; a fixed-step RK4 integrator of the same system is the
//! independent check, and takes over near case boundaries.

use std::fmt;

use serde::Serialize;

use crate::closed_form::{solve_k2, SolveError};
use crate::model::{DerivedCoeffs, LqModel};
use crate::tolerances::{CASE_TOL, MOMENT_RK4_STEPS, NEAR_CASE_BOUNDARY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MomentKind {
    Exploratory,
    Classical,
}

/// Which closed form applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MomentCase {
    /// `A1 = 0`, `B1 = 0`
    A,
    /// `A1 = 0`, `B1 != 0`
    B,
    /// `A1 != 0`, `A1 + B1^2 = 0`
    C,
    /// `A1 != 0`, `2 A1 + B1^2 = 0`
    D,
    /// generic
    E,
    /// Close to a case boundary; integrated numerically.
    Integrated,
}

impl MomentCase {
    pub fn tag(&self) -> &'static str {
        match self {
            MomentCase::A => "a",
            MomentCase::B => "b",
            MomentCase::C => "c",
            MomentCase::D => "d",
            MomentCase::E => "e",
            MomentCase::Integrated => "rk4",
        }
    }
}

impl fmt::Display for MomentCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// `(e^z - 1) / z`, continuous at 0.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        z.exp_m1() / z
    }
}

/// `(e^z - 1 - z) / z^2`, continuous at 0.
pub fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

/// Mean `n(t)`.
pub fn mean_curve(coeffs: &DerivedCoeffs, x0: f64, t: f64) -> f64 {
    if coeffs.a1.abs() <= CASE_TOL {
        x0 + coeffs.a2 * t
    } else {
        // (x0 + A2/A1) e^{A1 t} - A2/A1, written without the division
        x0 * (coeffs.a1 * t).exp() + coeffs.a2 * t * phi1(coeffs.a1 * t)
    }
}

/// Case selected by the exact conditions (within [`CASE_TOL`]).
pub fn closed_form_case(coeffs: &DerivedCoeffs) -> MomentCase {
    let a1 = coeffs.a1;
    let b1sq = coeffs.b1 * coeffs.b1;
    if a1.abs() <= CASE_TOL {
        if b1sq <= CASE_TOL {
            MomentCase::A
        } else {
            MomentCase::B
        }
    } else if (a1 + b1sq).abs() <= CASE_TOL {
        MomentCase::C
    } else if (2.0 * a1 + b1sq).abs() <= CASE_TOL {
        MomentCase::D
    } else {
        MomentCase::E
    }
}

/// Case actually used for evaluation: the closed-form case, unless a divisor
/// of that closed form is nonzero but small, in which case the integrator.
pub fn moment_case(coeffs: &DerivedCoeffs) -> MomentCase {
    let case = closed_form_case(coeffs);
    let a1 = coeffs.a1.abs();
    let near = |v: f64| v.abs() < NEAR_CASE_BOUNDARY;
    let b1sq = coeffs.b1 * coeffs.b1;
    let risky = match case {
        MomentCase::A | MomentCase::B => false,
        MomentCase::C | MomentCase::D => near(a1),
        MomentCase::E => near(a1) || near(coeffs.a1 + b1sq) || near(2.0 * coeffs.a1 + b1sq),
        MomentCase::Integrated => true,
    };
    if risky {
        MomentCase::Integrated
    } else {
        case
    }
}

fn forcing(coeffs: &DerivedCoeffs, kind: MomentKind) -> f64 {
    let c1 = match kind {
        MomentKind::Exploratory => coeffs.c1,
        MomentKind::Classical => 0.0,
    };
    coeffs.b2 * coeffs.b2 + c1
}

/// Case (a): `A1 = B1 = 0`.
pub fn second_moment_case_a(coeffs: &DerivedCoeffs, x0: f64, t: f64, kind: MomentKind) -> f64 {
    let a2 = coeffs.a2;
    x0 * x0 + 2.0 * a2 * x0 * t + a2 * a2 * t * t + forcing(coeffs, kind) * t
}

/// Case (b): `A1 = 0`, `B1 != 0`. Exact for any `B1`, including the limit `B1 -> 0`.
pub fn second_moment_case_b(coeffs: &DerivedCoeffs, x0: f64, t: f64, kind: MomentKind) -> f64 {
    let k = coeffs.b1 * coeffs.b1;
    let beta = 2.0 * (coeffs.a2 + coeffs.b1 * coeffs.b2);
    let gamma = forcing(coeffs, kind);
    let z = k * t;
    x0 * x0 * z.exp() + (beta * x0 + gamma) * t * phi1(z) + beta * coeffs.a2 * t * t * phi2(z)
}

/// Case (c): `A1 != 0`, `A1 + B1^2 = 0`.
pub fn second_moment_case_c(coeffs: &DerivedCoeffs, x0: f64, t: f64, kind: MomentKind) -> f64 {
    let (a1, a2) = (coeffs.a1, coeffs.a2);
    let beta = 2.0 * (a2 + coeffs.b1 * coeffs.b2);
    let gamma = forcing(coeffs, kind);
    let p = (beta * a2 - a1 * gamma) / (a1 * a1);
    let e = (a1 * t).exp();
    (x0 * x0 - p) * e + beta * (a1 * x0 + a2) / a1 * t * e + p
}

/// Case (d): `A1 != 0`, `2 A1 + B1^2 = 0`.
pub fn second_moment_case_d(coeffs: &DerivedCoeffs, x0: f64, t: f64, kind: MomentKind) -> f64 {
    let (a1, a2) = (coeffs.a1, coeffs.a2);
    let beta = 2.0 * (a2 + coeffs.b1 * coeffs.b2);
    let gamma = forcing(coeffs, kind);
    let shift = beta * (a1 * x0 + a2) / (a1 * a1);
    shift * (a1 * t).exp_m1() + (a1 * gamma - beta * a2) / a1 * t + x0 * x0
}

/// Case (e): `A1`, `A1 + B1^2` and `2 A1 + B1^2` all nonzero.
pub fn second_moment_case_e(coeffs: &DerivedCoeffs, x0: f64, t: f64, kind: MomentKind) -> f64 {
    let (a1, a2) = (coeffs.a1, coeffs.a2);
    let b1sq = coeffs.b1 * coeffs.b1;
    let alpha = 2.0 * a1 + b1sq;
    let beta = 2.0 * (a2 + coeffs.b1 * coeffs.b2);
    let gamma = forcing(coeffs, kind);
    let k2 = beta * (a1 * x0 + a2) / (a1 * (a1 + b1sq));
    let k3 = (a1 * gamma - beta * a2) / (a1 * alpha);
    (x0 * x0 + k2 + k3) * (alpha * t).exp() - k2 * (a1 * t).exp() - k3
}

/// Fixed-step RK4 on the joint `(n, m)` system.
pub fn moments_rk4(coeffs: &DerivedCoeffs, x0: f64, t: f64, kind: MomentKind, steps: usize) -> (f64, f64) {
    let alpha = 2.0 * coeffs.a1 + coeffs.b1 * coeffs.b1;
    let beta = 2.0 * (coeffs.a2 + coeffs.b1 * coeffs.b2);
    let gamma = forcing(coeffs, kind);
    let rhs = |n: f64, m: f64| (coeffs.a1 * n + coeffs.a2, alpha * m + beta * n + gamma);
    let h = t / steps as f64;
    let (mut n, mut m) = (x0, x0 * x0);
    for _ in 0..steps {
        let (k1n, k1m) = rhs(n, m);
        let (k2n, k2m) = rhs(n + 0.5 * h * k1n, m + 0.5 * h * k1m);
        let (k3n, k3m) = rhs(n + 0.5 * h * k2n, m + 0.5 * h * k2m);
        let (k4n, k4m) = rhs(n + h * k3n, m + h * k3m);
        n += h / 6.0 * (k1n + 2.0 * k2n + 2.0 * k3n + k4n);
        m += h / 6.0 * (k1m + 2.0 * k2m + 2.0 * k3m + k4m);
    }
    (n, m)
}

/// Second moment evaluated with the given case's closed form.
pub fn second_moment_in_case(case: MomentCase, coeffs: &DerivedCoeffs, x0: f64, t: f64, kind: MomentKind) -> f64 {
    match case {
        MomentCase::A => second_moment_case_a(coeffs, x0, t, kind),
        MomentCase::B => second_moment_case_b(coeffs, x0, t, kind),
        MomentCase::C => second_moment_case_c(coeffs, x0, t, kind),
        MomentCase::D => second_moment_case_d(coeffs, x0, t, kind),
        MomentCase::E => second_moment_case_e(coeffs, x0, t, kind),
        MomentCase::Integrated => moments_rk4(coeffs, x0, t, kind, MOMENT_RK4_STEPS).1,
    }
}

/// `m(t)` (exploratory) or `m_hat(t)` (classical) with the case used.
pub fn second_moment_curve(coeffs: &DerivedCoeffs, x0: f64, t: f64, kind: MomentKind) -> (f64, MomentCase) {
    let case = moment_case(coeffs);
    (second_moment_in_case(case, coeffs, x0, t, kind), case)
}

/// Tabulated moment curves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCurves {
    pub times: Vec<f64>,
    pub n: Vec<f64>,
    pub m: Vec<f64>,
    pub m_hat: Vec<f64>,
    pub case: MomentCase,
}

impl MomentCurves {
    pub fn evaluate(coeffs: &DerivedCoeffs, x0: f64, times: &[f64]) -> Self {
        let case = moment_case(coeffs);
        Self {
            times: times.to_vec(),
            n: times.iter().map(|&t| mean_curve(coeffs, x0, t)).collect(),
            m: times.iter().map(|&t| second_moment_in_case(case, coeffs, x0, t, MomentKind::Exploratory)).collect(),
            m_hat: times.iter().map(|&t| second_moment_in_case(case, coeffs, x0, t, MomentKind::Classical)).collect(),
            case,
        }
    }

    /// CSV with header `t,n,m,m_hat,case_tag`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,n,m,m_hat,case_tag\n");
        for i in 0..self.times.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.times[i],
                self.n[i],
                self.m[i],
                self.m_hat[i],
                self.case.tag()
            ));
        }
        out
    }
}

/// Growth exponent of the discounted second moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayReport {
    /// `2 A1 + B1^2 - rho` from the closed-loop coefficients.
    pub exponent: f64,
    /// The same quantity expanded in terms of the model and the Riccati root.
    pub expansion: f64,
    pub decays: bool,
}

/// `2 A1 + B1^2 - rho` expanded through the Riccati root:
/// `2A + C^2 - rho + (k2 (2N - k2 D^2)(B+CD)^2 - 2 N R (B+CD) + D^2 R^2) / (N - k2 D^2)^2`.
pub fn decay_expansion(model: &LqModel, k2: f64) -> f64 {
    let bcd = model.bcd();
    let d2 = model.d * model.d;
    let kappa = model.n - k2 * d2;
    let num = k2 * (2.0 * model.n - k2 * d2) * bcd * bcd - 2.0 * model.n * model.r * bcd + d2 * model.r * model.r;
    2.0 * model.a + model.c * model.c - model.rho + num / (kappa * kappa)
}

/// Admissibility check: `e^{-rho t} m(t) -> 0` iff the exponent is negative.
pub fn admissibility_decay(model: &LqModel, coeffs: &DerivedCoeffs) -> Result<DecayReport, SolveError> {
    let exponent = 2.0 * coeffs.a1 + coeffs.b1 * coeffs.b1 - model.rho;
    let expansion = decay_expansion(model, solve_k2(model)?);
    Ok(DecayReport { exponent, expansion, decays: exponent < 0.0 })
}

/// `e^{-rho t} m(t)`.
pub fn discounted_second_moment(coeffs: &DerivedCoeffs, x0: f64, rho: f64, t: f64) -> f64 {
    (-rho * t).exp() * second_moment_curve(coeffs, x0, t, MomentKind::Exploratory).0
}
