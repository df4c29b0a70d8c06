//! Model parameterization and standing-assumption checks.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::policy::AffineGaussianPolicy;
use crate::tolerances::BOUND_TOL;

/// Scalar linear-quadratic model with discounting and an entropy weight.
///
/// Dynamics `dx = (A x + B u) dt + (C x + D u) dW`, reward
/// `r(x, u) = -(M/2 x^2 + R x u + N/2 u^2 + P x + Q u)`, discount rate `rho`
/// and temperature `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub m: f64,
    pub n: f64,
    pub r: f64,
    pub p: f64,
    pub q: f64,
    pub rho: f64,
    pub lambda: f64,
}

impl LqModel {
    /// Reward `-(N/2 u^2 + Q u)` with no state dependence; dynamics irrelevant.
    pub fn state_independent(n: f64, q: f64, rho: f64, lambda: f64) -> Self {
        Self { a: 0.0, b: 0.0, c: 0.0, d: 0.0, m: 0.0, n, r: 0.0, p: 0.0, q, rho, lambda }
    }

    /// True when `M = R = P = 0`, the case with a constant value function.
    pub fn is_state_independent(&self) -> bool {
        self.m == 0.0 && self.r == 0.0 && self.p == 0.0
    }

    /// `B + C D`, the combination that keeps appearing in the Riccati algebra.
    pub fn bcd(&self) -> f64 {
        self.b + self.c * self.d
    }

    /// Running reward `r(x, u)`.
    pub fn reward(&self, x: f64, u: f64) -> f64 {
        -(0.5 * self.m * x * x + self.r * x * u + 0.5 * self.n * u * u + self.p * x + self.q * u)
    }

    /// Minimum discount rate for a well-posed problem:
    /// `2A + C^2 + max((D^2 R^2 - 2 N R (B + C D)) / N, 0)`.
    pub fn assumption_bound(&self) -> Result<f64, ModelError> {
        if !(self.n > 0.0) {
            return Err(ModelError::NonPositiveN(self.n));
        }
        let cross = (self.d * self.d * self.r * self.r - 2.0 * self.n * self.r * self.bcd()) / self.n;
        Ok(2.0 * self.a + self.c * self.c + cross.max(0.0))
    }

    /// Every violated standing condition, in a fixed order.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let fields = [
            ("A", self.a),
            ("B", self.b),
            ("C", self.c),
            ("D", self.d),
            ("M", self.m),
            ("N", self.n),
            ("R", self.r),
            ("P", self.p),
            ("Q", self.q),
            ("rho", self.rho),
            ("lambda", self.lambda),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                out.push(Violation::new(Condition::Finite, format!("{name} = {v}")));
            }
        }
        if !out.is_empty() {
            return out;
        }
        if !(self.n > 0.0) {
            out.push(Violation::new(Condition::NPositive, format!("N = {}", self.n)));
        }
        if self.m < 0.0 {
            out.push(Violation::new(Condition::MNonNegative, format!("M = {}", self.m)));
        }
        if !(self.rho > 0.0) {
            out.push(Violation::new(Condition::RhoPositive, format!("rho = {}", self.rho)));
        }
        if !(self.lambda > 0.0) {
            out.push(Violation::new(Condition::LambdaPositive, format!("lambda = {}", self.lambda)));
        }
        let boundary = self.m == 0.0 && self.r == 0.0;
        if !boundary && !(self.r * self.r - self.m * self.n < -BOUND_TOL) {
            out.push(Violation::new(
                Condition::CrossWeight,
                format!("R^2 = {} vs M*N = {}", self.r * self.r, self.m * self.n),
            ));
        }
        if self.m > 0.0 {
            if let Ok(bound) = self.assumption_bound() {
                if !(self.rho - bound > BOUND_TOL) {
                    out.push(Violation::new(
                        Condition::DiscountBound,
                        format!("rho = {} vs assumption bound = {}", self.rho, bound),
                    ));
                }
            }
        }
        out
    }

    /// Returns the model iff every standing condition holds.
    pub fn validate(&self) -> Result<CheckedModel, ModelError> {
        let violations = self.violations();
        if violations.is_empty() {
            Ok(CheckedModel { model: *self, waived: Vec::new() })
        } else {
            Err(ModelError::Invalid(violations))
        }
    }

    /// Like [`validate`](Self::validate) but waives the cross-weight and
    /// discount-bound conditions. Sign and finiteness conditions still apply;
    /// the result is flagged as unverified when anything was waived.
    pub fn validate_with_override(&self) -> Result<CheckedModel, ModelError> {
        let (waivable, hard): (Vec<_>, Vec<_>) = self
            .violations()
            .into_iter()
            .partition(|v| matches!(v.condition, Condition::CrossWeight | Condition::DiscountBound));
        if hard.is_empty() {
            Ok(CheckedModel { model: *self, waived: waivable })
        } else {
            Err(ModelError::Invalid(hard))
        }
    }
}

/// A model that passed validation, possibly with waived conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckedModel {
    model: LqModel,
    waived: Vec<Violation>,
}

impl CheckedModel {
    pub fn model(&self) -> &LqModel {
        &self.model
    }

    /// False when validation was overridden and some condition failed.
    pub fn is_verified(&self) -> bool {
        self.waived.is_empty()
    }

    pub fn waived(&self) -> &[Violation] {
        &self.waived
    }
}

impl std::ops::Deref for CheckedModel {
    type Target = LqModel;

    fn deref(&self) -> &LqModel {
        &self.model
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Condition {
    Finite,
    NPositive,
    MNonNegative,
    RhoPositive,
    LambdaPositive,
    CrossWeight,
    DiscountBound,
}

impl Condition {
    pub fn name(&self) -> &'static str {
        match self {
            Condition::Finite => "finite",
            Condition::NPositive => "N>0",
            Condition::MNonNegative => "M>=0",
            Condition::RhoPositive => "rho>0",
            Condition::LambdaPositive => "lambda>0",
            Condition::CrossWeight => "R²<MN",
            Condition::DiscountBound => "rho>assumption_bound",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub condition: Condition,
    pub detail: String,
}

impl Violation {
    fn new(condition: Condition, detail: String) -> Self {
        Self { condition, detail }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violated ({})", self.condition.name(), self.detail)
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("N must be positive, got {0}")]
    NonPositiveN(f64),
    #[error("invalid model: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// Coefficients of the closed-loop state equation under an affine Gaussian
/// feedback policy `N(a x + c, s^2)`:
/// `dX = (A1 X + A2) dt + sqrt((B1 X + B2)^2 + C1) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedCoeffs {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
}

impl DerivedCoeffs {
    pub fn new(a1: f64, a2: f64, b1: f64, b2: f64, c1: f64) -> Self {
        Self { a1, a2, b1, b2, c1 }
    }

    /// Same coefficients with the exploration variance removed (classical dynamics).
    pub fn classical(&self) -> Self {
        Self { c1: 0.0, ..*self }
    }
}

pub fn derived_coeffs(model: &LqModel, policy: &AffineGaussianPolicy) -> DerivedCoeffs {
    DerivedCoeffs {
        a1: model.a + model.b * policy.slope,
        a2: model.b * policy.intercept,
        b1: model.c + model.d * policy.slope,
        b2: model.d * policy.intercept,
        c1: model.d * model.d * policy.variance,
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::LqModel;

    /// The reference model used throughout the tests.
    pub fn s1() -> LqModel {
        LqModel { a: 0.0, b: 1.0, c: 0.0, d: 0.0, m: 1.0, n: 1.0, r: 0.0, p: 0.0, q: 0.0, rho: 1.0, lambda: 0.2 }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::s1;
    use super::*;
    use proptest::prelude::*;

    fn bound_model(a: f64, b: f64, c: f64, d: f64, n: f64, r: f64) -> LqModel {
        LqModel { a, b, c, d, n, r, ..s1() }
    }

    #[test]
    fn assumption_bound_examples() {
        assert_eq!(bound_model(0.0, 1.0, 0.0, 0.0, 1.0, 0.0).assumption_bound().unwrap(), 0.0);
        for (b, d, n) in [(1.0, 0.0, 1.0), (-2.0, 3.0, 0.5), (0.3, -1.0, 4.0)] {
            assert_eq!(bound_model(1.0, b, 1.0, d, n, 0.0).assumption_bound().unwrap(), 3.0);
        }
        // (1 - 2) / 1 = -1 is clipped to 0
        assert_eq!(bound_model(0.0, 1.0, 0.0, 1.0, 1.0, 1.0).assumption_bound().unwrap(), 0.0);
        // positive cross term: D=2, R=1, B=0, C=0, N=1 -> 4
        assert_eq!(bound_model(0.0, 0.0, 0.0, 2.0, 1.0, 1.0).assumption_bound().unwrap(), 4.0);
    }

    #[test]
    fn assumption_bound_rejects_nonpositive_n() {
        let m = bound_model(0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(m.assumption_bound(), Err(ModelError::NonPositiveN(0.0)));
    }

    #[test]
    fn s1_is_valid() {
        let checked = s1().validate().unwrap();
        assert!(checked.is_verified());
        assert_eq!(checked.model(), &s1());
    }

    #[test]
    fn zero_n_is_named() {
        let err = LqModel { n: 0.0, ..s1() }.validate().unwrap_err();
        let ModelError::Invalid(v) = err else { panic!() };
        assert!(v.iter().any(|v| v.condition.name() == "N>0"));
    }

    #[test]
    fn cross_weight_violation() {
        let err = LqModel { r: 1.5, ..s1() }.validate().unwrap_err();
        let ModelError::Invalid(v) = err else { panic!() };
        assert_eq!(v[0].condition, Condition::CrossWeight);
        assert!(v[0].detail.contains("2.25"));
    }

    #[test]
    fn equality_r2_eq_mn_is_rejected() {
        assert!(LqModel { r: 1.0, ..s1() }.validate().is_err());
    }

    #[test]
    fn state_independent_boundary_is_admitted() {
        // rho below 2A + C^2 is fine when M = 0
        let m = LqModel { a: 3.0, ..LqModel::state_independent(2.0, 1.0, 0.5, 1.0) };
        assert!(m.validate().is_ok());
    }

    #[test]
    fn discount_bound_violation_and_override() {
        let m = LqModel { a: 1.0, ..s1() };
        let err = m.validate().unwrap_err();
        let ModelError::Invalid(v) = err else { panic!() };
        assert_eq!(v[0].condition, Condition::DiscountBound);
        let checked = m.validate_with_override().unwrap();
        assert!(!checked.is_verified());
        assert!(LqModel { n: -1.0, a: 1.0, ..s1() }.validate_with_override().is_err());
    }

    #[test]
    fn non_finite_is_reported() {
        let err = LqModel { q: f64::NAN, ..s1() }.validate().unwrap_err();
        let ModelError::Invalid(v) = err else { panic!() };
        assert_eq!(v[0].condition, Condition::Finite);
    }

    #[test]
    fn derived_coeffs_examples() {
        let k2 = (1.0 - 5f64.sqrt()) / 2.0;
        let c = derived_coeffs(&s1(), &AffineGaussianPolicy::new(k2, 0.0, 0.2));
        assert_eq!(c, DerivedCoeffs::new(k2, 0.0, 0.0, 0.0, 0.0));

        let m = LqModel { a: 0.7, c: -0.3, d: 2.0, ..s1() };
        let c = derived_coeffs(&m, &AffineGaussianPolicy::new(0.0, 0.0, 0.0));
        assert_eq!(c, DerivedCoeffs::new(0.7, 0.0, -0.3, 0.0, 0.0));

        let m = LqModel { a: 0.0, b: 1.0, c: 0.0, d: 1.0, ..s1() };
        let c = derived_coeffs(&m, &AffineGaussianPolicy::new(-1.0, 2.0, 0.5));
        assert_eq!(c, DerivedCoeffs::new(-1.0, 2.0, -1.0, 2.0, 0.5));
    }

    fn arb_model() -> impl Strategy<Value = LqModel> {
        (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64, 0.1..3.0f64, -2.0..2.0f64)
            .prop_map(|(a, b, c, d, n, r)| LqModel { a, b, c, d, n, r, ..s1() })
    }

    proptest! {
        #[test]
        fn bound_symmetric_in_r_when_bcd_vanishes(m in arb_model()) {
            let m = LqModel { b: -m.c * m.d, ..m };
            let flipped = LqModel { r: -m.r, ..m };
            prop_assert_eq!(m.assumption_bound().unwrap(), flipped.assumption_bound().unwrap());
        }

        #[test]
        fn bound_invariant_under_sign_flips_preserving_bcd_and_d2(m in arb_model()) {
            // (B, C, D) -> (B, -C, -D) keeps B + CD, D^2 and C^2
            let flipped = LqModel { c: -m.c, d: -m.d, ..m };
            prop_assert_eq!(m.assumption_bound().unwrap(), flipped.assumption_bound().unwrap());
        }

        #[test]
        fn derived_coeffs_linear_in_slope_and_intercept(
            m in arb_model(),
            a in -3.0..3.0f64, c in -3.0..3.0f64,
            a2 in -3.0..3.0f64, c2 in -3.0..3.0f64,
            s2 in 0.0..2.0f64, t in -2.0..2.0f64,
        ) {
            let base = derived_coeffs(&m, &AffineGaussianPolicy::new(0.0, 0.0, s2));
            let f = |a: f64, c: f64| derived_coeffs(&m, &AffineGaussianPolicy::new(a, c, s2));
            let (u, v, w) = (f(a, c), f(a2, c2), f(a + t * a2, c + t * c2));
            for (x, y, z, b0) in [
                (u.a1, v.a1, w.a1, base.a1),
                (u.a2, v.a2, w.a2, base.a2),
                (u.b1, v.b1, w.b1, base.b1),
                (u.b2, v.b2, w.b2, base.b2),
            ] {
                prop_assert!((z - b0 - ((x - b0) + t * (y - b0))).abs() < 1e-12);
            }
            prop_assert_eq!(u.c1, base.c1);
            prop_assert_eq!(v.c1, base.c1);
            prop_assert!(u.c1 >= 0.0);
        }
    }
}
