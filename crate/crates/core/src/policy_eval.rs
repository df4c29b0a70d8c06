//! Monte Carlo evaluation of the discounted objective of an affine Gaussian
//! policy, with an analytic bound on the truncated tail.

use serde::Serialize;
use thiserror::Error;

use crate::closed_form::{classical_from_value, exploratory_solution, SolveError};
use crate::model::{derived_coeffs, CheckedModel, LqModel};
use crate::moments::{second_moment_curve, MomentKind};
use crate::policy::{gaussian_entropy, AffineGaussianPolicy};
use crate::rng::{CounterKey, STREAM_ACTIONS, STREAM_INCREMENTS};
use crate::sde::{
    mean_and_se, par_map, ClassicalStepper, DiffusionBranch, ExploratoryStepper, PathGrid, SimError, Stepper,
};
use crate::tolerances::{BOUND_TOL, DIVERGENCE_THRESHOLD};
use crate::QuadraticValue;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("policy variance must be nonnegative, got {0}")]
    NegativeVariance(f64),
    #[error("entropy term requires positive policy variance, got {0}")]
    NoEntropy(f64),
    #[error("objective is not finite: discounted second moment grows at rate {0} >= 0")]
    NotAdmissible(f64),
}

/// `int r(x, u) pi(u | x) du + lambda H(pi(. | x))` for `pi = N(a x + c, s^2)`.
/// With `s^2 = 0` this is the classical reward `r(x, a x + c)`.
pub fn running_integrand(model: &LqModel, policy: &AffineGaussianPolicy, x: f64) -> Result<f64, EvalError> {
    let s2 = policy.variance;
    if s2 < 0.0 || s2.is_nan() {
        return Err(EvalError::NegativeVariance(s2));
    }
    let mu = policy.mean(x);
    if s2 == 0.0 {
        return Ok(model.reward(x, mu));
    }
    Ok(reward_mean(model, mu, s2, x) + model.lambda * gaussian_entropy(s2))
}

/// Entropy-regularized integrand; rejects deterministic policies.
pub fn entropy_integrand(model: &LqModel, policy: &AffineGaussianPolicy, x: f64) -> Result<f64, EvalError> {
    if !(policy.variance > 0.0) {
        return Err(EvalError::NoEntropy(policy.variance));
    }
    running_integrand(model, policy, x)
}

#[inline]
fn reward_mean(model: &LqModel, mu: f64, s2: f64, x: f64) -> f64 {
    -(0.5 * model.m * x * x + model.r * x * mu + 0.5 * model.n * (mu * mu + s2) + model.p * x + model.q * mu)
}

/// Exact value `E int_0^inf e^{-rho t} L(X_t) dt = p2/2 x^2 + p1 x + p0` of
/// an affine Gaussian policy, where `L` is [`running_integrand`]. Requires
/// `2 A1 + B1^2 < rho` for the closed-loop coefficients.
pub fn policy_value(model: &LqModel, policy: &AffineGaussianPolicy) -> Result<QuadraticValue, EvalError> {
    if policy.variance < 0.0 || policy.variance.is_nan() {
        return Err(EvalError::NegativeVariance(policy.variance));
    }
    let c = derived_coeffs(model, policy);
    let gap2 = model.rho - 2.0 * c.a1 - c.b1 * c.b1;
    if !(gap2 > 0.0) {
        return Err(EvalError::NotAdmissible(-gap2));
    }
    let (a, m) = (policy.slope, policy.intercept);
    let s2 = policy.variance;
    let p2 = -(model.m + 2.0 * model.r * a + model.n * a * a) / gap2;
    let p1 =
        (-(model.r * m + model.n * a * m + model.p + model.q * a) + p2 * (c.a2 + c.b1 * c.b2)) / (model.rho - c.a1);
    let entropy = if s2 > 0.0 { model.lambda * gaussian_entropy(s2) } else { 0.0 };
    let p0 = (-(0.5 * model.n * (m * m + s2) + model.q * m) + entropy + p1 * c.a2 + 0.5 * p2 * (c.b2 * c.b2 + c.c1))
        / model.rho;
    Ok(QuadraticValue::new(p2, p1, p0))
}

/// `e^{-rho T} (|p2|/2 m(T) + |p1| sqrt(m(T)) + |p0|)`: bounds the part of the
/// objective beyond the horizon, using the policy's own value and second moment.
pub fn truncation_bound(
    model: &LqModel,
    policy: &AffineGaussianPolicy,
    x0: f64,
    horizon: f64,
) -> Result<f64, EvalError> {
    let v = policy_value(model, policy)?;
    let coeffs = derived_coeffs(model, policy);
    let (m, _) = second_moment_curve(&coeffs, x0, horizon, MomentKind::Exploratory);
    let m = m.max(0.0);
    Ok((-model.rho * horizon).exp() * (0.5 * v.k2.abs() * m + v.k1.abs() * m.sqrt() + v.k0.abs()))
}

/// How the action integral is evaluated along a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ActionMode {
    /// Gaussian moments in closed form.
    Analytic,
    /// One sampled action per step, `r(x, u) - lambda ln pi(u | x)`.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub parallelism: usize,
    pub actions: ActionMode,
    pub branch: DiffusionBranch,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { parallelism: 1, actions: ActionMode::Analytic, branch: DiffusionBranch::Aligned }
    }
}

/// Monte Carlo estimate of a discounted objective over a finite horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Bound on the omitted tail beyond the horizon; not part of `std_error`.
    pub truncation_bound: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
}

/// Serialized form written as `estimate.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateRecord {
    pub value: f64,
    pub std_error: f64,
    pub truncation_bound: f64,
    pub n_paths: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub seed: u64,
}

impl ValueEstimate {
    pub fn record(&self) -> EstimateRecord {
        EstimateRecord {
            value: self.mean,
            std_error: self.std_error,
            truncation_bound: self.truncation_bound,
            n_paths: self.n_paths,
            dt: self.dt,
            horizon: self.horizon,
            seed: self.seed,
        }
    }

    /// `3 * std_error + truncation_bound`.
    pub fn tolerance(&self) -> f64 {
        3.0 * self.std_error + self.truncation_bound
    }

    /// `|mean - target| <= tolerance()`, up to [`BOUND_TOL`] of rounding slack.
    pub fn agrees_with(&self, target: f64) -> bool {
        (self.mean - target).abs() <= self.tolerance() + BOUND_TOL
    }

    pub fn truncation_exceeds(&self, tol: f64) -> bool {
        self.truncation_bound > tol
    }
}

/// Quadrature weights `int_{t_k}^{t_k + dt} e^{-rho t} dt` for the
/// left-endpoint rule: the state is frozen on each step, the discount factor
/// is integrated exactly.
pub fn discount_weights(rho: f64, grid: &PathGrid) -> Vec<f64> {
    let w0 = -(-rho * grid.dt).exp_m1() / rho;
    (0..grid.n_steps).map(|k| (-rho * grid.time(k)).exp() * w0).collect()
}

struct PathOutcome {
    total: f64,
    diverged_at: Option<usize>,
}

fn first_divergence(outcomes: &[PathOutcome]) -> Result<(), SimError> {
    let diverged: Vec<(usize, usize)> =
        outcomes.iter().enumerate().filter_map(|(p, o)| o.diverged_at.map(|k| (p, k))).collect();
    match diverged.first() {
        None => Ok(()),
        Some(&(path, step)) => Err(SimError::Diverged { count: diverged.len(), path, step }),
    }
}

#[inline]
fn increment(noisy: bool, sd: f64, seed: u64, path: usize, step: usize) -> f64 {
    if noisy {
        sd * CounterKey::new(seed, STREAM_INCREMENTS, path as u64, step as u64).normal()
    } else {
        0.0
    }
}

fn escaped(x: f64) -> bool {
    !x.is_finite() || x.abs() > DIVERGENCE_THRESHOLD
}

/// Monte Carlo value of `policy` from `x0`: left-endpoint quadrature of the
/// discounted running integrand along Euler–Maruyama paths of the
/// exploratory state equation.
pub fn mc_value(
    model: &LqModel,
    policy: &AffineGaussianPolicy,
    x0: f64,
    grid: PathGrid,
    seed: u64,
    n_paths: usize,
    opts: &EvalOptions,
) -> Result<ValueEstimate, EvalError> {
    let grid = PathGrid::new(grid.dt, grid.n_steps)?;
    if policy.variance < 0.0 || policy.variance.is_nan() {
        return Err(EvalError::NegativeVariance(policy.variance));
    }
    let truncation = truncation_bound(model, policy, x0, grid.horizon())?;
    let weights = discount_weights(model.rho, &grid);
    let stepper = ExploratoryStepper::new(model, policy, opts.branch);
    let noisy = model.c != 0.0 || model.d != 0.0;
    let sd = grid.dt.sqrt();
    let entropy = if policy.variance > 0.0 { model.lambda * gaussian_entropy(policy.variance) } else { 0.0 };
    let action_sd = policy.variance.sqrt();
    let outcomes = par_map(n_paths, opts.parallelism, |p| {
        let mut x = x0;
        let mut total = 0.0;
        for (k, w) in weights.iter().enumerate() {
            let integrand = match opts.actions {
                ActionMode::Analytic => reward_mean(model, policy.mean(x), policy.variance, x) + entropy,
                ActionMode::Sampled => {
                    let z = CounterKey::new(seed, STREAM_ACTIONS, p as u64, k as u64).normal();
                    let u = policy.mean(x) + action_sd * z;
                    let log_pi = if policy.variance > 0.0 { policy.pdf(x, u).ln() } else { 0.0 };
                    model.reward(x, u) - model.lambda * log_pi
                }
            };
            total += w * integrand;
            x = stepper.step(x, grid.dt, increment(noisy, sd, seed, p, k));
            if escaped(x) {
                return PathOutcome { total, diverged_at: Some(k + 1) };
            }
        }
        PathOutcome { total, diverged_at: None }
    });
    first_divergence(&outcomes)?;
    let (mean, std_error) = mean_and_se(outcomes.iter().map(|o| o.total));
    Ok(ValueEstimate {
        mean,
        std_error,
        truncation_bound: truncation,
        n_paths,
        dt: grid.dt,
        horizon: grid.horizon(),
        seed,
    })
}

/// Monte Carlo exploration cost: the classical optimal value minus the
/// exploratory optimal value net of its entropy bonus. Classical and
/// exploratory paths share Brownian increments; the entropy part is
/// deterministic and cancels, so each path contributes the discounted
/// difference of the two reward streams.
pub fn mc_exploration_cost(
    model: &CheckedModel,
    x0: f64,
    grid: PathGrid,
    seed: u64,
    n_paths: usize,
    opts: &EvalOptions,
) -> Result<ValueEstimate, EvalError> {
    let grid = PathGrid::new(grid.dt, grid.n_steps)?;
    let (value, policy) = exploratory_solution(model)?;
    let classical = classical_from_value(model, &value)?;
    let feedback = classical.policy();
    let model: &LqModel = model;
    let horizon = grid.horizon();

    let entropy = gaussian_entropy(policy.variance);
    let discount_tail = (-model.rho * horizon).exp() / model.rho;
    let truncation = truncation_bound(model, &policy, x0, horizon)?
        + truncation_bound(model, &feedback, x0, horizon)?
        + model.lambda * entropy.abs() * discount_tail;

    let weights = discount_weights(model.rho, &grid);
    let explore = ExploratoryStepper::new(model, &policy, opts.branch);
    let control = ClassicalStepper::new(model, feedback.slope, feedback.intercept);
    let noisy = model.c != 0.0 || model.d != 0.0;
    let sd = grid.dt.sqrt();
    let outcomes = par_map(n_paths, opts.parallelism, |p| {
        let (mut x, mut y) = (x0, x0);
        let mut total = 0.0;
        for (k, w) in weights.iter().enumerate() {
            let classical_reward = model.reward(y, feedback.mean(y));
            let exploratory_reward = reward_mean(model, policy.mean(x), policy.variance, x);
            total += w * (classical_reward - exploratory_reward);
            let dw = increment(noisy, sd, seed, p, k);
            x = explore.step(x, grid.dt, dw);
            y = control.step(y, grid.dt, dw);
            if escaped(x) || escaped(y) {
                return PathOutcome { total, diverged_at: Some(k + 1) };
            }
        }
        PathOutcome { total, diverged_at: None }
    });
    first_divergence(&outcomes)?;
    let (mean, std_error) = mean_and_se(outcomes.iter().map(|o| o.total));
    Ok(ValueEstimate { mean, std_error, truncation_bound: truncation, n_paths, dt: grid.dt, horizon, seed })
}
