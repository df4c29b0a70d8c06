//! Closed-form solution of the exploratory (entropy-regularized) LQ problem
//! and of its classical counterpart.
//!
//! The value function is the quadratic `V(x) = k2/2 x^2 + k1 x + k0`. The
//! curvature `k2` is the concave root of an algebraic Riccati equation, `k1`
//! solves a linear equation given `k2`, and `k0` collects the constant terms
//! including the entropy bonus. The optimal feedback density is Gaussian with
//! a state-affine mean and a state-independent variance; its mean is the
//! classical optimal feedback, and only the variance carries `lambda`.
//!
//! Each coefficient has a matching residual function so callers can check a
//! solution against the defining equation instead of comparing two floating
//! point evaluations of the same formula.

use std::f64::consts::PI;

use serde::Serialize;

use crate::model::{CheckedModel, LqModel};
use crate::policy::AffineGaussianPolicy;
use crate::tolerances::DEGENERATE_DENOMINATOR;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("no concave Riccati root (discriminant {discriminant}, root {root})")]
    NoConcaveRoot { discriminant: f64, root: f64 },
    #[error("degenerate linear term: denominator {0} is numerically zero")]
    DegenerateLinearTerm(f64),
    #[error("Boltzmann density not integrable: N - D^2 v'' = {0} <= 0")]
    NonIntegrable(f64),
    #[error("N must be positive, got {0}")]
    NonPositiveN(f64),
    #[error("temperature must be positive, got {0}")]
    NonPositiveLambda(f64),
}

/// `V(x) = k2/2 x^2 + k1 x + k0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticValue {
    pub k2: f64,
    pub k1: f64,
    pub k0: f64,
}

impl QuadraticValue {
    pub fn new(k2: f64, k1: f64, k0: f64) -> Self {
        Self { k2, k1, k0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        0.5 * self.k2 * x * x + self.k1 * x + self.k0
    }

    pub fn gradient(&self, x: f64) -> f64 {
        self.k2 * x + self.k1
    }

    pub fn curvature(&self) -> f64 {
        self.k2
    }
}

/// Coefficients of the Riccati quadratic `alpha k^2 - beta k + gamma = 0`
/// obtained by clearing the denominator `N - k D^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiQuadratic {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl RiccatiQuadratic {
    pub fn of(model: &LqModel) -> Self {
        let bcd = model.bcd();
        let margin = model.rho - (2.0 * model.a + model.c * model.c);
        Self {
            alpha: bcd * bcd + margin * model.d * model.d,
            beta: margin * model.n + 2.0 * bcd * model.r - model.d * model.d * model.m,
            gamma: model.r * model.r - model.m * model.n,
        }
    }

    pub fn discriminant(&self) -> f64 {
        self.beta * self.beta - 4.0 * self.alpha * self.gamma
    }
}

/// Both roots of the Riccati quadratic. Only `concave` is a value-function
/// curvature; `convex` is kept for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiccatiRoots {
    pub concave: f64,
    pub convex: Option<f64>,
    pub discriminant: f64,
}

pub fn riccati_roots(model: &LqModel) -> Result<RiccatiRoots, SolveError> {
    if !(model.n > 0.0) {
        return Err(SolveError::NonPositiveN(model.n));
    }
    let quad = RiccatiQuadratic::of(model);
    let disc = quad.discriminant();
    if quad.gamma == 0.0 {
        // M = R = 0: the curvature vanishes
        let other = (quad.alpha != 0.0).then(|| quad.beta / quad.alpha);
        return Ok(RiccatiRoots { concave: 0.0, convex: other, discriminant: disc });
    }
    if !(disc >= 0.0) {
        return Err(SolveError::NoConcaveRoot { discriminant: disc, root: f64::NAN });
    }
    // Minus-branch root (beta - sqrt(disc)) / (2 alpha), rationalized so that
    // it stays finite when alpha -> 0.
    let upper = quad.beta + disc.sqrt();
    let concave = 2.0 * quad.gamma / upper;
    if !(upper > 0.0) || !concave.is_finite() || concave > 0.0 {
        return Err(SolveError::NoConcaveRoot { discriminant: disc, root: concave });
    }
    let convex = (quad.alpha != 0.0).then(|| upper / (2.0 * quad.alpha));
    Ok(RiccatiRoots { concave, convex, discriminant: disc })
}

/// Curvature `k2` of the value function.
pub fn solve_k2(model: &LqModel) -> Result<f64, SolveError> {
    riccati_roots(model).map(|r| r.concave)
}

/// `rho k2 - RHS` of the quadratic coefficient equation.
pub fn riccati_residual(model: &LqModel, k2: f64) -> f64 {
    let denom = model.n - k2 * model.d * model.d;
    let slope_num = k2 * model.bcd() - model.r;
    model.rho * k2 - (slope_num * slope_num / denom + k2 * (2.0 * model.a + model.c * model.c) - model.m)
}

/// Concave Riccati root found by bracketing and bisection on
/// [`riccati_residual`]; independent of the explicit formula.
pub fn riccati_root_by_bisection(model: &LqModel) -> Result<f64, SolveError> {
    if model.m == 0.0 && model.r == 0.0 {
        return Ok(0.0);
    }
    let f = |k: f64| riccati_residual(model, k);
    let (mut lo, mut hi) = (-1.0, 0.0);
    if !(f(hi) > 0.0) {
        return Err(SolveError::NoConcaveRoot { discriminant: f64::NAN, root: f(hi) });
    }
    let mut tries = 0;
    while f(lo) >= 0.0 {
        lo *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(SolveError::NoConcaveRoot { discriminant: f64::NAN, root: lo });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(if f(lo).abs() < f(hi).abs() { lo } else { hi })
}

/// Linear coefficient `k1` given `k2`.
pub fn solve_k1(model: &LqModel, k2: f64) -> Result<f64, SolveError> {
    let denom_n = model.n - k2 * model.d * model.d;
    let den = k2 * model.b * model.bcd() + (model.a - model.rho) * denom_n - model.b * model.r;
    if den.abs() <= DEGENERATE_DENOMINATOR {
        return Err(SolveError::DegenerateLinearTerm(den));
    }
    // `+ 0.0` turns a signed zero into +0 so outputs never print "-0"
    Ok((model.p * denom_n + model.q * (k2 * model.bcd() - model.r)) / den + 0.0)
}

/// `rho k1 - RHS` of the linear coefficient equation.
pub fn linear_residual(model: &LqModel, k2: f64, k1: f64) -> f64 {
    let denom = model.n - k2 * model.d * model.d;
    model.rho * k1 - ((k1 * model.b - model.q) * (k2 * model.bcd() - model.r) / denom + k1 * model.a - model.p)
}

/// `(lambda / 2) (ln(2 pi e lambda / kappa) - 1)`, with the logarithm split as
/// `ln(2 pi) + 1 + ln(lambda) - ln(kappa)` so that tiny or huge temperatures
/// do not overflow the product.
fn entropy_constant(lambda: f64, kappa: f64) -> f64 {
    0.5 * lambda * (((2.0 * PI).ln() + 1.0 + lambda.ln() - kappa.ln()) - 1.0)
}

/// `ln(2 pi e lambda / kappa)`.
fn log_2pie_ratio(lambda: f64, kappa: f64) -> f64 {
    (2.0 * PI).ln() + 1.0 + lambda.ln() - kappa.ln()
}

fn control_curvature(model: &LqModel, k2: f64) -> Result<f64, SolveError> {
    let kappa = model.n - k2 * model.d * model.d;
    if kappa > 0.0 {
        Ok(kappa)
    } else {
        Err(SolveError::NonIntegrable(kappa))
    }
}

/// Constant term `k0` given `k2` and `k1`.
pub fn solve_k0(model: &LqModel, k2: f64, k1: f64) -> Result<f64, SolveError> {
    let kappa = control_curvature(model, k2)?;
    let lin = k1 * model.b - model.q;
    Ok((lin * lin / kappa + 2.0 * entropy_constant(model.lambda, kappa)) / (2.0 * model.rho))
}

/// `rho k0 - RHS` of the constant-term equation.
pub fn constant_residual(model: &LqModel, k2: f64, k1: f64, k0: f64) -> f64 {
    let kappa = model.n - k2 * model.d * model.d;
    let lin = k1 * model.b - model.q;
    model.rho * k0 - (lin * lin / (2.0 * kappa) + entropy_constant(model.lambda, kappa))
}

/// Gaussian feedback that maximizes the Hamiltonian for the quadratic `value`.
pub fn optimal_policy(model: &LqModel, value: &QuadraticValue) -> Result<AffineGaussianPolicy, SolveError> {
    let kappa = control_curvature(model, value.k2)?;
    Ok(AffineGaussianPolicy {
        slope: (value.k2 * model.bcd() - model.r) / kappa,
        intercept: (value.k1 * model.b - model.q) / kappa + 0.0,
        variance: model.lambda / kappa,
    })
}

/// Value coefficients from the three solvers, without the validation gate.
pub fn exploratory_value(model: &LqModel) -> Result<QuadraticValue, SolveError> {
    if !(model.lambda > 0.0) {
        return Err(SolveError::NonPositiveLambda(model.lambda));
    }
    let k2 = solve_k2(model)?;
    let k1 = solve_k1(model, k2)?;
    let k0 = solve_k0(model, k2, k1)?;
    Ok(QuadraticValue { k2, k1, k0 })
}

/// Value function and optimal Gaussian feedback of the exploratory problem.
pub fn exploratory_solution(model: &CheckedModel) -> Result<(QuadraticValue, AffineGaussianPolicy), SolveError> {
    let value = exploratory_value(model)?;
    let policy = optimal_policy(model, &value)?;
    Ok((value, policy))
}

/// Classical value `w(x) = alpha2/2 x^2 + alpha1 x + alpha0` and its affine
/// optimal feedback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassicalSolution {
    pub alpha2: f64,
    pub alpha1: f64,
    pub alpha0: f64,
    pub slope: f64,
    pub intercept: f64,
}

impl ClassicalSolution {
    pub fn value(&self) -> QuadraticValue {
        QuadraticValue::new(self.alpha2, self.alpha1, self.alpha0)
    }

    pub fn feedback(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    pub fn policy(&self) -> AffineGaussianPolicy {
        AffineGaussianPolicy::deterministic(self.slope, self.intercept)
    }
}

/// Classical coefficients from an exploratory value: same `k2`, `k1`, and the
/// constant with the entropy part removed.
pub fn classical_from_value(model: &LqModel, value: &QuadraticValue) -> Result<ClassicalSolution, SolveError> {
    let kappa = control_curvature(model, value.k2)?;
    let lin = value.k1 * model.b - model.q;
    Ok(ClassicalSolution {
        alpha2: value.k2,
        alpha1: value.k1,
        alpha0: lin * lin / (2.0 * model.rho * kappa),
        slope: (value.k2 * model.bcd() - model.r) / kappa,
        intercept: lin / kappa + 0.0,
    })
}

pub fn classical_solution(model: &CheckedModel) -> Result<ClassicalSolution, SolveError> {
    let k2 = solve_k2(model)?;
    let k1 = solve_k1(model, k2)?;
    classical_from_value(model, &QuadraticValue::new(k2, k1, 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HjbKind {
    Exploratory,
    Classical,
}

/// `rho v(x)` minus the right-hand side of the HJB equation for a quadratic `v`.
pub fn hjb_residual(model: &LqModel, value: &QuadraticValue, x: f64, kind: HjbKind) -> Result<f64, SolveError> {
    let v2 = value.curvature();
    let v1 = value.gradient(x);
    let kappa = control_curvature(model, v2)?;
    let num = model.c * model.d * x * v2 + model.b * v1 - model.r * x - model.q;
    let mut rhs =
        num * num / (2.0 * kappa) + 0.5 * (model.c * model.c * v2 - model.m) * x * x + (model.a * v1 - model.p) * x;
    if kind == HjbKind::Exploratory {
        rhs += entropy_constant(model.lambda, kappa);
    }
    Ok(model.rho * value.eval(x) - rhs)
}

/// Boltzmann density `exp(H(x, u) / lambda) / Z(x)` of the Hamiltonian
/// `H = r + sigma^2 v'' / 2 + b v'` with respect to the action.
///
/// The numerator is evaluated directly from the Hamiltonian; the normalizer
/// is the Gaussian integral of the completed square.
pub fn softmax_density(model: &LqModel, value: &QuadraticValue, x: f64, u: f64) -> Result<f64, SolveError> {
    let v2 = value.curvature();
    let v1 = value.gradient(x);
    let kappa = control_curvature(model, v2)?;
    let hamiltonian = |u: f64| {
        let sigma = model.c * x + model.d * u;
        model.reward(x, u) + 0.5 * sigma * sigma * v2 + (model.a * x + model.b * u) * v1
    };
    let mode = (model.c * model.d * x * v2 + model.b * v1 - model.r * x - model.q) / kappa;
    let log_norm = 0.5 * (2.0 * PI * model.lambda / kappa).ln();
    Ok(((hamiltonian(u) - hamiltonian(mode)) / model.lambda - log_norm).exp())
}

/// Exploration cost `lambda / (2 rho)`.
pub fn exploration_cost(model: &LqModel) -> f64 {
    model.lambda / (2.0 * model.rho)
}

/// `V_cl(x) - V(x) + (lambda / rho) * 0.5 ln(2 pi e lambda / (N - k2 D^2))`,
/// i.e. the exploration cost assembled from its definition.
pub fn exploration_cost_decomposition(
    model: &LqModel,
    value: &QuadraticValue,
    classical: &ClassicalSolution,
    x: f64,
) -> Result<f64, SolveError> {
    let kappa = control_curvature(model, value.k2)?;
    let entropy_integral = -0.5 * log_2pie_ratio(model.lambda, kappa) / model.rho;
    Ok(classical.value().eval(x) - (value.eval(x) + model.lambda * entropy_integral))
}

/// One row of a temperature sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub variance: f64,
    /// `V(x) - V_cl(x)`, identical at every state.
    pub value_gap: f64,
    pub cost: f64,
    pub mean_at_probe: f64,
}

/// Policy variance, value gap and cost as the temperature varies.
pub fn lambda_sweep(model: &LqModel, lambdas: &[f64], probe_x: f64) -> Result<Vec<SweepRow>, SolveError> {
    if let Some(&bad) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(SolveError::NonPositiveLambda(bad));
    }
    let k2 = solve_k2(model)?;
    let k1 = solve_k1(model, k2)?;
    let classical = classical_from_value(model, &QuadraticValue::new(k2, k1, 0.0))?;
    let kappa = control_curvature(model, k2)?;
    Ok(lambdas
        .iter()
        .map(|&lambda| SweepRow {
            lambda,
            variance: lambda / kappa,
            value_gap: entropy_constant(lambda, kappa) / model.rho,
            cost: lambda / (2.0 * model.rho),
            mean_at_probe: classical.feedback(probe_x),
        })
        .collect())
}

/// Everything the solver produces for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub value: QuadraticValue,
    pub policy: AffineGaussianPolicy,
    pub classical: ClassicalSolution,
    pub cost: f64,
    pub assumption_bound: f64,
    pub verified: bool,
}

/// Serialized form written as `solution.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionRecord {
    pub k2: f64,
    pub k1: f64,
    pub k0: f64,
    pub alpha0: f64,
    pub policy: AffineGaussianPolicy,
    pub cost: f64,
    pub assumption_bound: f64,
    pub verified: bool,
}

impl Solution {
    pub fn solve(model: &CheckedModel) -> Result<Self, SolveError> {
        let (value, policy) = exploratory_solution(model)?;
        let classical = classical_from_value(model, &value)?;
        let assumption_bound = model.assumption_bound().map_err(|_| SolveError::NonPositiveN(model.n))?;
        Ok(Self {
            value,
            policy,
            classical,
            cost: exploration_cost(model),
            assumption_bound,
            verified: model.is_verified(),
        })
    }

    pub fn record(&self) -> SolutionRecord {
        SolutionRecord {
            k2: self.value.k2,
            k1: self.value.k1,
            k0: self.value.k0,
            alpha0: self.classical.alpha0,
            policy: self.policy,
            cost: self.cost,
            assumption_bound: self.assumption_bound,
            verified: self.verified,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::s1;

    // (1 - sqrt 5) / 2
    const K2_S1: f64 = -0.618_033_988_749_894_8;
    // 0.1 (ln(0.4 pi e) - 1), 30-digit evaluation
    const K0_S1: f64 = 0.022_843_915_397_524_51;

    fn s1_checked() -> CheckedModel {
        s1().validate().unwrap()
    }

    #[test]
    fn k2_examples() {
        let k2 = solve_k2(&s1()).unwrap();
        assert!((k2 - K2_S1).abs() < 1e-15);
        assert!(riccati_residual(&s1(), k2).abs() < 1e-12);
        let rho2 = LqModel { rho: 2.0, ..s1() };
        assert!((solve_k2(&rho2).unwrap() - (1.0 - 2f64.sqrt())).abs() < 1e-15);
        let si = LqModel::state_independent(2.0, 1.0, 0.5, 1.0);
        assert_eq!(solve_k2(&si).unwrap(), 0.0);
    }

    #[test]
    fn bisection_oracle_agrees_with_formula() {
        for m in [s1(), LqModel { rho: 2.0, ..s1() }, LqModel { d: 1.0, c: 0.5, r: 0.3, ..s1() }] {
            let a = solve_k2(&m).unwrap();
            let b = riccati_root_by_bisection(&m).unwrap();
            assert!((a - b).abs() < 1e-13 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn convex_root_is_exposed_for_diagnostics() {
        let roots = riccati_roots(&s1()).unwrap();
        let convex = roots.convex.unwrap();
        assert!((convex - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-14);
        assert!(riccati_residual(&s1(), convex).abs() < 1e-12);
    }

    #[test]
    fn uncontrolled_model_has_finite_root() {
        // B = D = 0 makes the Riccati equation linear
        let m = LqModel { b: 0.0, a: -0.5, ..s1() };
        let k2 = solve_k2(&m).unwrap();
        assert!((k2 - (-1.0 / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn negative_discriminant_is_reported() {
        // discount far below the bound, gate overridden
        let m = LqModel { a: 5.0, d: 1.0, b: 0.0, ..s1() };
        assert!(matches!(solve_k2(&m), Err(SolveError::NoConcaveRoot { .. })));
    }

    #[test]
    fn k1_examples() {
        assert_eq!(solve_k1(&s1(), K2_S1).unwrap(), 0.0);
        let p1 = LqModel { p: 1.0, ..s1() };
        let k1 = solve_k1(&p1, K2_S1).unwrap();
        assert!((k1 - 1.0 / (K2_S1 - 1.0)).abs() < 1e-15);
        assert!((k1 - (-0.618_033_988_749_894_8)).abs() < 1e-15);
        assert!(linear_residual(&p1, K2_S1, k1).abs() < 1e-12);
        // Q enters the numerator through k2 (B + C D) as well as R
        let q1 = LqModel { q: 1.0, ..s1() };
        let k1 = solve_k1(&q1, K2_S1).unwrap();
        assert!((k1 - K2_S1 / (K2_S1 - 1.0)).abs() < 1e-15);
        assert!(linear_residual(&q1, K2_S1, k1).abs() < 1e-12);
        let si = LqModel { a: 0.3, ..LqModel::state_independent(2.0, 1.0, 0.5, 1.0) };
        assert_eq!(solve_k1(&si, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn k1_degenerate_denominator() {
        // state-independent with rho = A and P != 0
        let m = LqModel { a: 0.5, p: 1.0, ..LqModel::state_independent(2.0, 1.0, 0.5, 1.0) };
        assert!(matches!(solve_k1(&m, 0.0), Err(SolveError::DegenerateLinearTerm(_))));
    }

    #[test]
    fn k0_examples() {
        let k0 = solve_k0(&s1(), K2_S1, 0.0).unwrap();
        assert!((k0 - K0_S1).abs() < 1e-15);
        let si = LqModel::state_independent(2.0, 1.0, 0.5, 1.0);
        let k0 = solve_k0(&si, 0.0, 0.0).unwrap();
        assert!((k0 - 1.644_729_885_849_400_2).abs() < 1e-14);
        // lambda chosen so that ln(2 pi e lambda / kappa) = 1
        let kappa = 1.0 - K2_S1 * 4.0;
        let m = LqModel { d: 2.0, q: 0.4, lambda: kappa / (2.0 * PI), ..s1() };
        let k2 = solve_k2(&m).unwrap();
        let kappa = m.n - k2 * m.d * m.d;
        let m = LqModel { lambda: kappa / (2.0 * PI), ..m };
        let k1 = solve_k1(&m, k2).unwrap();
        let expected = (k1 * m.b - m.q).powi(2) / (2.0 * m.rho * kappa);
        assert!((solve_k0(&m, k2, k1).unwrap() - expected).abs() < 1e-14);
        assert!(matches!(solve_k0(&LqModel { d: 1.0, ..s1() }, 2.0, 0.0), Err(SolveError::NonIntegrable(_))));
    }

    #[test]
    fn exploratory_solution_examples() {
        let (value, policy) = exploratory_solution(&s1_checked()).unwrap();
        assert!((policy.slope - K2_S1).abs() < 1e-15);
        assert_eq!(policy.intercept, 0.0);
        assert!((policy.variance - 0.2).abs() < 1e-16);
        assert!((value.eval(1.0) - (-0.286_173_078_977_422_9)).abs() < 1e-14);

        let si = LqModel::state_independent(2.0, 1.0, 0.5, 1.0).validate().unwrap();
        let (value, policy) = exploratory_solution(&si).unwrap();
        for x in [-3.0, 0.0, 5.0] {
            assert_eq!(policy.mean(x), -0.5);
        }
        assert_eq!(policy.variance, 0.5);
        assert_eq!((value.k2, value.k1), (0.0, 0.0));

        let d1 = LqModel { d: 1.0, ..s1() }.validate().unwrap();
        let (_, policy) = exploratory_solution(&d1).unwrap();
        assert!(policy.variance < d1.lambda / d1.n);
    }

    #[test]
    fn classical_solution_examples() {
        let cl = classical_solution(&s1_checked()).unwrap();
        assert_eq!(cl.alpha0, 0.0);
        assert!((cl.feedback(2.0) - 2.0 * K2_S1).abs() < 1e-15);

        let si = LqModel::state_independent(2.0, 1.0, 0.5, 1.0).validate().unwrap();
        let cl = classical_solution(&si).unwrap();
        assert_eq!(cl.value().eval(3.0), 0.5);
        assert_eq!(cl.feedback(3.0), -0.5);

        let m = LqModel { c: 0.4, d: 0.8, r: 0.2, p: -0.3, q: 0.6, rho: 2.0, ..s1() }.validate().unwrap();
        let cl = classical_solution(&m).unwrap();
        let (_, policy) = exploratory_solution(&m).unwrap();
        for x in [-10.0, 0.0, 10.0] {
            assert_eq!(cl.feedback(x) - policy.mean(x), 0.0);
        }
    }

    #[test]
    fn hjb_residual_examples() {
        let (value, _) = exploratory_solution(&s1_checked()).unwrap();
        assert!(hjb_residual(&s1(), &value, 0.0, HjbKind::Exploratory).unwrap().abs() < 1e-10);
        let shifted = QuadraticValue { k0: value.k0 + 1.0, ..value };
        let r = hjb_residual(&s1(), &shifted, 0.0, HjbKind::Exploratory).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
        let cl = classical_solution(&s1_checked()).unwrap();
        for i in -5..=5 {
            let r = hjb_residual(&s1(), &cl.value(), i as f64, HjbKind::Classical).unwrap();
            assert!(r.abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_density_examples() {
        let (value, policy) = exploratory_solution(&s1_checked()).unwrap();
        let p = softmax_density(&s1(), &value, 0.0, 0.0).unwrap();
        assert!((p - 0.892_062_058_076_385_5).abs() < 1e-14);

        // Simpson over [-50, 50]
        let n = 20_000;
        let h = 100.0 / n as f64;
        let f = |u: f64| softmax_density(&s1(), &value, 0.7, u).unwrap();
        let mut s = f(-50.0) + f(50.0);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(-50.0 + i as f64 * h);
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-8);

        // mode by golden-section search
        let (mut lo, mut hi) = (-5.0f64, 5.0f64);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let dens = |u: f64| softmax_density(&s1(), &value, 1.0, u).unwrap();
        for _ in 0..200 {
            let (c, d) = (hi - g * (hi - lo), lo + g * (hi - lo));
            if dens(c) > dens(d) {
                hi = d;
            } else {
                lo = c;
            }
        }
        assert!((0.5 * (lo + hi) - policy.mean(1.0)).abs() < 1e-7);
        assert!((policy.mean(1.0) - K2_S1).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_non_integrable() {
        let value = QuadraticValue::new(2.0, 0.0, 0.0);
        let m = LqModel { d: 1.0, ..s1() };
        assert!(matches!(softmax_density(&m, &value, 0.0, 0.0), Err(SolveError::NonIntegrable(_))));
    }

    #[test]
    fn exploration_cost_examples() {
        assert_eq!(exploration_cost(&LqModel::state_independent(1.0, 0.0, 0.5, 1.0)), 1.0);
        assert!((exploration_cost(&s1()) - 0.1).abs() < 1e-16);
        let checked = s1_checked();
        let (value, _) = exploratory_solution(&checked).unwrap();
        let cl = classical_solution(&checked).unwrap();
        for x in [-3.0, 0.0, 7.0] {
            let c = exploration_cost_decomposition(&s1(), &value, &cl, x).unwrap();
            assert!((c - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_sweep_examples() {
        let rows = lambda_sweep(&s1(), &[0.2, 0.02, 0.002], 1.0).unwrap();
        let expected = [0.022_843_915_397_524_51, -0.020_741_459_390_188_01, -0.004_376_731_032_012_846];
        for (row, e) in rows.iter().zip(expected) {
            assert!((row.value_gap - e).abs() < 1e-15, "{} vs {e}", row.value_gap);
            assert!((row.mean_at_probe - K2_S1).abs() < 1e-15);
        }
        assert!(rows[2].value_gap.abs() < rows[1].value_gap.abs());
        assert_eq!(rows[0].variance / rows[1].variance, 10.0);
        assert!(matches!(lambda_sweep(&s1(), &[0.1, 0.0], 1.0), Err(SolveError::NonPositiveLambda(_))));
    }

    #[test]
    fn solution_record_fields() {
        let sol = Solution::solve(&s1_checked()).unwrap();
        let json = serde_json::to_value(sol.record()).unwrap();
        for key in ["k2", "k1", "k0", "alpha0", "policy", "cost", "assumption_bound"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        for key in ["slope", "intercept", "variance"] {
            assert!(json["policy"].get(key).is_some());
        }
        assert_eq!(json["assumption_bound"], 0.0);
    }
}
