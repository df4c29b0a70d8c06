//! Euler–Maruyama simulation of the classical and exploratory state
//! equations, plus exact reference paths on shared Brownian increments.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{derived_coeffs, DerivedCoeffs, LqModel};
use crate::moments::phi1;
use crate::policy::AffineGaussianPolicy;
use crate::rng::{CounterKey, STREAM_BRIDGE, STREAM_INCREMENTS, STREAM_OU_RESIDUAL};
use crate::tolerances::{DEFAULT_ODE_SUBSTEPS, DIVERGENCE_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("unsupported exact path: {0}")]
    Unsupported(String),
    #[error("batches are not comparable: {0}")]
    Mismatch(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{count} path(s) diverged (first: path {path} at step {step})")]
    Diverged { count: usize, path: usize, step: usize },
}

/// Uniform time grid on `[0, dt * n_steps]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathGrid {
    pub dt: f64,
    pub n_steps: usize,
}

impl PathGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self, SimError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SimError::InvalidGrid(format!("dt must be positive and finite, got {dt}")));
        }
        if n_steps == 0 {
            return Err(SimError::InvalidGrid("n_steps must be at least 1".into()));
        }
        Ok(Self { dt, n_steps })
    }

    /// Grid with step `dt` covering `horizon`; `horizon / dt` must be an integer
    /// up to rounding.
    pub fn with_horizon(horizon: f64, dt: f64) -> Result<Self, SimError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(SimError::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        let steps = (horizon / dt).round();
        if !(steps >= 1.0) || ((steps * dt - horizon).abs() > 1e-9 * horizon) {
            return Err(SimError::InvalidGrid(format!("horizon {horizon} is not a multiple of dt {dt}")));
        }
        Self::new(dt, steps as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn time(&self, step: usize) -> f64 {
        self.dt * step as f64
    }

    pub fn refine(&self, factor: usize) -> Self {
        Self { dt: self.dt / factor as f64, n_steps: self.n_steps * factor }
    }
}

/// Brownian increments of one path on a grid.
///
/// `level` distinguishes refinements of the same base path so that bridge and
/// auxiliary normals at different resolutions never share counter keys.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub grid: PathGrid,
    pub seed: u64,
    pub path_index: u64,
    pub increments: Vec<f64>,
    level: u64,
}

impl BrownianPath {
    pub fn generate(grid: PathGrid, seed: u64, path_index: u64) -> Self {
        let sd = grid.dt.sqrt();
        let increments = (0..grid.n_steps as u64)
            .map(|k| sd * CounterKey::new(seed, STREAM_INCREMENTS, path_index, k).normal())
            .collect();
        Self { grid, seed, path_index, increments, level: 0 }
    }

    /// `W` on the grid nodes, starting at 0.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.increments.len() + 1);
        let mut acc = 0.0;
        w.push(acc);
        for dw in &self.increments {
            acc += dw;
            w.push(acc);
        }
        w
    }

    /// Same path on a grid `factor` times finer, filled in by Brownian bridges:
    /// the sub-increments of each step sum to the original increment.
    pub fn refine(&self, factor: usize) -> Self {
        assert!(factor >= 1);
        if factor == 1 {
            return self.clone();
        }
        let fine = self.grid.refine(factor);
        let level = self.level * 64 + factor as u64;
        let stream = STREAM_BRIDGE | (level << 8);
        let sd = fine.dt.sqrt();
        let f = factor as f64;
        let mut increments = Vec::with_capacity(fine.n_steps);
        let mut z = vec![0.0; factor];
        for (k, dw) in self.increments.iter().enumerate() {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj = CounterKey::new(self.seed, stream, self.path_index, (k * factor + j) as u64).normal();
            }
            let zbar = z.iter().sum::<f64>() / f;
            increments.extend(z.iter().map(|zj| dw / f + sd * (zj - zbar)));
        }
        Self { grid: fine, seed: self.seed, path_index: self.path_index, increments, level }
    }

    /// Sums of `factor` consecutive increments.
    pub fn coarsen(&self, factor: usize) -> Result<Self, SimError> {
        if factor == 0 || self.grid.n_steps % factor != 0 {
            return Err(SimError::InvalidGrid(format!("cannot coarsen {} steps by {factor}", self.grid.n_steps)));
        }
        let grid = PathGrid::new(self.grid.dt * factor as f64, self.grid.n_steps / factor)?;
        let increments = self.increments.chunks(factor).map(|c| c.iter().sum()).collect();
        Ok(Self { grid, seed: self.seed, path_index: self.path_index, increments, level: self.level })
    }

    /// Standard normal independent of the increments, one per step.
    pub fn aux_normal(&self, step: usize) -> f64 {
        CounterKey::new(self.seed, STREAM_OU_RESIDUAL | (self.level << 8), self.path_index, step as u64).normal()
    }
}

/// Which square root is used for the exploratory diffusion coefficient.
///
/// Both give the same law. `Principal` is the nonnegative root and is the one
/// the exact reference paths solve; `Aligned` carries the sign of
/// `C x + D mu(x)`, which makes the zero-variance exploratory scheme reproduce
/// the classical scheme bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiffusionBranch {
    Principal,
    Aligned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TrajectoryKind {
    Exploratory,
    Classical,
    Exact,
}

/// Execution settings shared by the simulators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Worker threads; results do not depend on it.
    pub parallelism: usize,
    /// Keep every `store_stride`-th node (and the last one).
    pub store_stride: usize,
    pub branch: DiffusionBranch,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { parallelism: 1, store_stride: 1, branch: DiffusionBranch::Aligned }
    }
}

/// Maps `f` over `0..n` on `parallelism` threads, preserving order.
pub(crate) fn par_map<T, F>(n: usize, parallelism: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if parallelism <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

/// One Euler–Maruyama step of a scalar SDE.
pub trait Stepper: Sync {
    fn step(&self, x: f64, dt: f64, dw: f64) -> f64;
}

/// Exploratory dynamics under `N(a x + c, s^2)`.
#[derive(Debug, Clone, Copy)]
pub struct ExploratoryStepper {
    model: LqModel,
    policy: AffineGaussianPolicy,
    injected: f64,
    branch: DiffusionBranch,
}

impl ExploratoryStepper {
    pub fn new(model: &LqModel, policy: &AffineGaussianPolicy, branch: DiffusionBranch) -> Self {
        Self { model: *model, policy: *policy, injected: model.d * model.d * policy.variance, branch }
    }
}

impl Stepper for ExploratoryStepper {
    #[inline]
    fn step(&self, x: f64, dt: f64, dw: f64) -> f64 {
        let m = &self.model;
        let mu = self.policy.mean(x);
        let v = m.c * x + m.d * mu;
        let sigma = (v * v + self.injected).sqrt();
        let sigma = match self.branch {
            DiffusionBranch::Aligned if v < 0.0 => -sigma,
            _ => sigma,
        };
        x + (m.a * x + m.b * mu) * dt + sigma * dw
    }
}

/// Classical dynamics under `u(x) = a x + c`.
#[derive(Debug, Clone, Copy)]
pub struct ClassicalStepper {
    model: LqModel,
    slope: f64,
    intercept: f64,
}

impl ClassicalStepper {
    pub fn new(model: &LqModel, slope: f64, intercept: f64) -> Self {
        Self { model: *model, slope, intercept }
    }
}

impl Stepper for ClassicalStepper {
    #[inline]
    fn step(&self, x: f64, dt: f64, dw: f64) -> f64 {
        let m = &self.model;
        let u = self.slope * x + self.intercept;
        x + (m.a * x + m.b * u) * dt + (m.c * x + m.d * u) * dw
    }
}

/// Simulated paths, stored every `stride` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBatch {
    pub grid: PathGrid,
    pub n_paths: usize,
    pub seed: u64,
    pub kind: TrajectoryKind,
    pub x0: f64,
    pub stride: usize,
    /// Per path, the values at [`TrajectoryBatch::stored_steps`].
    pub states: Vec<Vec<f64>>,
    /// Per path, the first step at which `|X|` exceeded the divergence
    /// threshold or became non-finite. The stored values of a diverged path
    /// are frozen at the last acceptable value.
    pub diverged_at: Vec<Option<usize>>,
}

/// Summary of a batch at the final node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BatchSummary {
    pub n_paths: usize,
    pub diverged: usize,
    #[serde(rename = "mean_T")]
    pub mean_t: f64,
    #[serde(rename = "m2_T")]
    pub m2_t: f64,
}

fn stored_steps(n_steps: usize, stride: usize) -> Vec<usize> {
    let mut steps: Vec<usize> = (0..=n_steps).step_by(stride.max(1)).collect();
    if *steps.last().unwrap() != n_steps {
        steps.push(n_steps);
    }
    steps
}

impl TrajectoryBatch {
    pub fn stored_steps(&self) -> Vec<usize> {
        stored_steps(self.grid.n_steps, self.stride)
    }

    pub fn endpoint(&self, path: usize) -> f64 {
        *self.states[path].last().unwrap()
    }

    pub fn n_diverged(&self) -> usize {
        self.diverged_at.iter().filter(|d| d.is_some()).count()
    }

    /// Sample mean and second moment at stored node `node` over non-diverged
    /// paths, with their standard errors: `(mean, se_mean, m2, se_m2)`.
    pub fn moments_at(&self, node: usize) -> (f64, f64, f64, f64) {
        let vals: Vec<f64> =
            (0..self.n_paths).filter(|&p| self.diverged_at[p].is_none()).map(|p| self.states[p][node]).collect();
        let (m1, s1) = mean_and_se(vals.iter().copied());
        let (m2, s2) = mean_and_se(vals.iter().map(|x| x * x));
        (m1, s1, m2, s2)
    }

    pub fn summary(&self) -> BatchSummary {
        let last = self.states.first().map_or(0, |s| s.len() - 1);
        let (mean_t, _, m2_t, _) = self.moments_at(last);
        BatchSummary { n_paths: self.n_paths, diverged: self.n_diverged(), mean_t, m2_t }
    }

    /// CSV with header `t,path_id,x`, one row per stored node per path.
    pub fn to_csv(&self) -> String {
        let steps = self.stored_steps();
        let mut out = String::from("t,path_id,x\n");
        for (p, states) in self.states.iter().enumerate() {
            for (&k, x) in steps.iter().zip(states) {
                let _ = writeln!(out, "{},{},{}", self.grid.time(k), p, x);
            }
        }
        out
    }
}

/// Sample mean and its standard error.
pub fn mean_and_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0usize, 0.0, 0.0);
    for v in values {
        n += 1;
        let d = v - mean;
        mean += d / n as f64;
        m2 += d * (v - mean);
    }
    if n < 2 {
        return (mean, 0.0);
    }
    let var = m2 / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn diverging(x: f64) -> bool {
    !x.is_finite() || x.abs() > DIVERGENCE_THRESHOLD
}

/// Keeps the stored nodes of a full path and records divergence.
fn store_path(values: impl Iterator<Item = f64>, steps: &[usize]) -> (Vec<f64>, Option<usize>) {
    let mut out = Vec::with_capacity(steps.len());
    let mut next = 0;
    let mut last_ok = f64::NAN;
    let mut diverged = None;
    for (k, x) in values.enumerate() {
        if diverged.is_none() {
            if diverging(x) {
                diverged = Some(k);
            } else {
                last_ok = x;
            }
        }
        if next < steps.len() && steps[next] == k {
            out.push(last_ok);
            next += 1;
        }
    }
    (out, diverged)
}

fn run_euler<S: Stepper>(
    stepper: &S,
    x0: f64,
    grid: PathGrid,
    seed: u64,
    n_paths: usize,
    opts: &SimOptions,
    kind: TrajectoryKind,
) -> TrajectoryBatch {
    let steps = stored_steps(grid.n_steps, opts.store_stride);
    let results = par_map(n_paths, opts.parallelism, |p| {
        let path = BrownianPath::generate(grid, seed, p as u64);
        let mut x = x0;
        let iter = std::iter::once(x0).chain(path.increments.iter().map(|dw| {
            x = stepper.step(x, grid.dt, *dw);
            x
        }));
        store_path(iter, &steps)
    });
    let (states, diverged_at) = results.into_iter().unzip();
    TrajectoryBatch { grid, n_paths, seed, kind, x0, stride: opts.store_stride.max(1), states, diverged_at }
}

/// Euler–Maruyama for the exploratory state equation
/// `dX = (A X + B mu(X)) dt + sqrt((C X + D mu(X))^2 + D^2 s^2) dW`.
pub fn simulate_exploratory(
    model: &LqModel,
    policy: &AffineGaussianPolicy,
    x0: f64,
    grid: PathGrid,
    seed: u64,
    n_paths: usize,
    opts: &SimOptions,
) -> Result<TrajectoryBatch, SimError> {
    let grid = PathGrid::new(grid.dt, grid.n_steps)?;
    if !(policy.variance >= 0.0) {
        return Err(SimError::Numerical(format!("policy variance must be >= 0, got {}", policy.variance)));
    }
    let stepper = ExploratoryStepper::new(model, policy, opts.branch);
    Ok(run_euler(&stepper, x0, grid, seed, n_paths, opts, TrajectoryKind::Exploratory))
}

/// Euler–Maruyama for `dx = (A x + B u) dt + (C x + D u) dW` with `u = a x + c`.
pub fn simulate_classical(
    model: &LqModel,
    slope: f64,
    intercept: f64,
    x0: f64,
    grid: PathGrid,
    seed: u64,
    n_paths: usize,
    opts: &SimOptions,
) -> Result<TrajectoryBatch, SimError> {
    let grid = PathGrid::new(grid.dt, grid.n_steps)?;
    let stepper = ClassicalStepper::new(model, slope, intercept);
    Ok(run_euler(&stepper, x0, grid, seed, n_paths, opts, TrajectoryKind::Classical))
}

/// Exact path when `D = 0`: the closed loop is
/// `dX = (A1 X + A2) dt + |C| |X| dW`, solved by
/// `X_t = x Phi_t + A2 Phi_t int_0^t Phi_s^{-1} ds` with
/// `Phi_t = exp((A1 - C^2/2) t ± |C| W_t)`. The sign is `+` for the
/// nonnegative regime (`x >= 0`, `A2 >= 0`) and `-` for the nonpositive one.
/// The time integral uses the trapezoid rule on the path's grid.
pub fn exact_path_d0(
    model: &LqModel,
    policy: &AffineGaussianPolicy,
    x0: f64,
    path: &BrownianPath,
) -> Result<Vec<f64>, SimError> {
    if model.d != 0.0 {
        return Err(SimError::Unsupported(format!("requires D = 0, got D = {}", model.d)));
    }
    let coeffs = derived_coeffs(model, policy);
    let sign = if x0 >= 0.0 && coeffs.a2 >= 0.0 {
        1.0
    } else if x0 <= 0.0 && coeffs.a2 <= 0.0 {
        -1.0
    } else {
        return Err(SimError::Unsupported(format!(
            "no explicit solution for x0 = {x0} with drift offset {} of the opposite sign",
            coeffs.a2
        )));
    };
    let c = model.c.abs();
    let h = path.grid.dt;
    let growth = (coeffs.a1 - 0.5 * c * c) * h;
    let mut x = x0;
    let mut out = Vec::with_capacity(path.increments.len() + 1);
    out.push(x);
    for dw in &path.increments {
        let r = (growth + sign * c * dw).exp();
        x = r * x + coeffs.a2 * 0.5 * h * (r + 1.0);
        out.push(x);
    }
    Ok(out)
}

/// Exact path when the closed-loop diffusion is constant (`C = 0` and
/// `D a = 0`): an Ornstein–Uhlenbeck process sampled by its exact Gaussian
/// transition. The stochastic convolution over each step is split into its
/// projection on the step's Brownian increment and an independent residual.
pub fn exact_path_c0(
    model: &LqModel,
    policy: &AffineGaussianPolicy,
    x0: f64,
    path: &BrownianPath,
) -> Result<Vec<f64>, SimError> {
    if model.c != 0.0 {
        return Err(SimError::Unsupported(format!("requires C = 0, got C = {}", model.c)));
    }
    let coeffs = derived_coeffs(model, policy);
    if coeffs.b1 != 0.0 {
        return Err(SimError::Unsupported(format!("diffusion depends on the state (D * slope = {})", coeffs.b1)));
    }
    let sigma = (coeffs.b2 * coeffs.b2 + coeffs.c1).sqrt();
    let h = path.grid.dt;
    let z = coeffs.a1 * h;
    let decay = z.exp();
    let shift = coeffs.a2 * h * phi1(z);
    // Cov(I, dW) / h and sd of the residual of I given dW
    let proj = phi1(z);
    let resid_var = if z.abs() < 1e-3 { h * z * z / 12.0 * (1.0 + z) } else { h * (phi1(2.0 * z) - phi1(z) * phi1(z)) };
    let resid_sd = resid_var.max(0.0).sqrt();
    let mut x = x0;
    let mut out = Vec::with_capacity(path.increments.len() + 1);
    out.push(x);
    for (k, dw) in path.increments.iter().enumerate() {
        let conv = proj * dw + if resid_sd > 0.0 { resid_sd * path.aux_normal(k) } else { 0.0 };
        x = decay * x + shift + sigma * conv;
        out.push(x);
    }
    Ok(out)
}

/// The pathwise transform `X = F(W, Y)` for
/// `dX = (A1 X + A2) dt + sqrt((B1 X + B2)^2 + C1) dW` with `B1 != 0`, `C1 > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DossSaussman {
    pub coeffs: DerivedCoeffs,
    sqrt_c1: f64,
}

impl DossSaussman {
    pub fn new(coeffs: DerivedCoeffs) -> Result<Self, SimError> {
        if !(coeffs.c1 > 0.0) {
            return Err(SimError::Unsupported("requires D != 0 and positive policy variance".into()));
        }
        if coeffs.b1 == 0.0 {
            return Err(SimError::Unsupported("requires C + D * slope != 0".into()));
        }
        Ok(Self { coeffs, sqrt_c1: coeffs.c1.sqrt() })
    }

    pub fn for_policy(model: &LqModel, policy: &AffineGaussianPolicy) -> Result<Self, SimError> {
        if model.d == 0.0 {
            return Err(SimError::Unsupported("requires D != 0".into()));
        }
        Self::new(derived_coeffs(model, policy))
    }

    fn theta(&self, z: f64, y: f64) -> (f64, f64) {
        let s0 = (self.coeffs.b1 * y + self.coeffs.b2) / self.sqrt_c1;
        (self.coeffs.b1 * z + s0.asinh(), s0)
    }

    /// `F(z, y)`, with `F(0, y) = y`.
    pub fn f(&self, z: f64, y: f64) -> f64 {
        let (theta, _) = self.theta(z, y);
        (self.sqrt_c1 * theta.sinh() - self.coeffs.b2) / self.coeffs.b1
    }

    /// `dF/dz` from the closed form.
    pub fn f_z(&self, z: f64, y: f64) -> f64 {
        self.sqrt_c1 * self.theta(z, y).0.cosh()
    }

    /// Right side of the defining ODE: `sqrt((B1 F + B2)^2 + C1)`.
    pub fn f_z_ode(&self, z: f64, y: f64) -> f64 {
        let v = self.coeffs.b1 * self.f(z, y) + self.coeffs.b2;
        (v * v + self.coeffs.c1).sqrt()
    }

    pub fn f_y(&self, z: f64, y: f64) -> f64 {
        let (theta, s0) = self.theta(z, y);
        theta.cosh() / (1.0 + s0 * s0).sqrt()
    }

    /// Drift of the random ODE for `Y`.
    pub fn g(&self, z: f64, y: f64) -> f64 {
        let c = &self.coeffs;
        let (theta, s0) = self.theta(z, y);
        // B1 F + B2 = sqrt(C1) sinh(theta), so F_zz = B1 sqrt(C1) sinh(theta)
        let shifted = self.sqrt_c1 * theta.sinh();
        let f = (shifted - c.b2) / c.b1;
        let f_y = theta.cosh() / (1.0 + s0 * s0).sqrt();
        (c.a1 * f + c.a2 - 0.5 * c.b1 * shifted) / f_y
    }

    /// Relative mismatch between the closed-form `dF/dz` and the ODE right side.
    pub fn ode_mismatch(&self, z: f64, y: f64) -> f64 {
        let a = self.f_z(z, y);
        let b = self.f_z_ode(z, y);
        (a - b).abs() / b.max(f64::MIN_POSITIVE)
    }
}

/// Exact path for `D != 0` via the Doss–Saussman transform. `Y` is integrated
/// with RK4 using `ode_substeps` sub-steps per grid step, with `W` linear
/// between grid nodes.
pub fn doss_saussman_path(
    model: &LqModel,
    policy: &AffineGaussianPolicy,
    x0: f64,
    path: &BrownianPath,
    ode_substeps: usize,
) -> Result<Vec<f64>, SimError> {
    let ds = DossSaussman::for_policy(model, policy)?;
    let substeps = ode_substeps.max(1);
    let h = path.grid.dt / substeps as f64;
    let mut y = x0;
    let mut w = 0.0;
    let mut out = Vec::with_capacity(path.increments.len() + 1);
    out.push(ds.f(0.0, y));
    for dw in &path.increments {
        let slope = dw / path.grid.dt;
        for j in 0..substeps {
            let z0 = w + slope * h * j as f64;
            let zm = z0 + 0.5 * slope * h;
            let z1 = z0 + slope * h;
            let k1 = ds.g(z0, y);
            let k2 = ds.g(zm, y + 0.5 * h * k1);
            let k3 = ds.g(zm, y + 0.5 * h * k2);
            let k4 = ds.g(z1, y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        w += dw;
        if ds.ode_mismatch(w, y) > 1e-8 {
            return Err(SimError::Numerical(format!("transform check failed at W = {w}, Y = {y}")));
        }
        out.push(ds.f(w, y));
    }
    Ok(out)
}

/// Which exact solution to use as a reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExactRegime {
    D0,
    C0,
    DossSaussman,
}

impl ExactRegime {
    pub fn name(&self) -> &'static str {
        match self {
            ExactRegime::D0 => "d0",
            ExactRegime::C0 => "c0",
            ExactRegime::DossSaussman => "doss-saussman",
        }
    }

    /// The regime that applies to a model and policy, if any.
    pub fn detect(model: &LqModel, policy: &AffineGaussianPolicy, x0: f64) -> Option<Self> {
        let coeffs = derived_coeffs(model, policy);
        if model.d == 0.0 {
            let ok = (x0 >= 0.0 && coeffs.a2 >= 0.0) || (x0 <= 0.0 && coeffs.a2 <= 0.0);
            ok.then_some(ExactRegime::D0)
        } else if model.c == 0.0 && coeffs.b1 == 0.0 {
            Some(ExactRegime::C0)
        } else if coeffs.b1 != 0.0 && coeffs.c1 > 0.0 {
            Some(ExactRegime::DossSaussman)
        } else {
            None
        }
    }
}

/// Exact paths on `grid`, each computed on its Brownian path refined by
/// `ref_factor` and read off at the grid nodes.
pub fn exact_batch(
    regime: ExactRegime,
    model: &LqModel,
    policy: &AffineGaussianPolicy,
    x0: f64,
    grid: PathGrid,
    seed: u64,
    n_paths: usize,
    ref_factor: usize,
    opts: &SimOptions,
) -> Result<TrajectoryBatch, SimError> {
    let grid = PathGrid::new(grid.dt, grid.n_steps)?;
    let factor = ref_factor.max(1);
    let steps = stored_steps(grid.n_steps, opts.store_stride);
    let results = par_map(n_paths, opts.parallelism, |p| {
        let fine = BrownianPath::generate(grid, seed, p as u64).refine(factor);
        let values = match regime {
            ExactRegime::D0 => exact_path_d0(model, policy, x0, &fine)?,
            ExactRegime::C0 => exact_path_c0(model, policy, x0, &fine)?,
            ExactRegime::DossSaussman => doss_saussman_path(model, policy, x0, &fine, DEFAULT_ODE_SUBSTEPS)?,
        };
        Ok(store_path(values.into_iter().step_by(factor), &steps))
    });
    let results: Result<Vec<_>, SimError> = results.into_iter().collect();
    let (states, diverged_at) = results?.into_iter().unzip();
    Ok(TrajectoryBatch {
        grid,
        n_paths,
        seed,
        kind: TrajectoryKind::Exact,
        x0,
        stride: opts.store_stride.max(1),
        states,
        diverged_at,
    })
}

/// Endpoint deviations between two batches on the same grid and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongError {
    pub max: f64,
    pub mean: f64,
    pub rms: f64,
}

pub fn strong_error(a: &TrajectoryBatch, b: &TrajectoryBatch) -> Result<StrongError, SimError> {
    if a.grid != b.grid {
        return Err(SimError::Mismatch(format!("grids differ: {:?} vs {:?}", a.grid, b.grid)));
    }
    if a.seed != b.seed {
        return Err(SimError::Mismatch(format!("seeds differ: {} vs {}", a.seed, b.seed)));
    }
    if a.n_paths != b.n_paths {
        return Err(SimError::Mismatch(format!("path counts differ: {} vs {}", a.n_paths, b.n_paths)));
    }
    let (mut max, mut sum, mut sq, mut n) = (0.0f64, 0.0, 0.0, 0usize);
    for p in 0..a.n_paths {
        if a.diverged_at[p].is_some() || b.diverged_at[p].is_some() {
            continue;
        }
        let d = (a.endpoint(p) - b.endpoint(p)).abs();
        max = max.max(d);
        sum += d;
        sq += d * d;
        n += 1;
    }
    if n == 0 {
        return Ok(StrongError { max: 0.0, mean: 0.0, rms: 0.0 });
    }
    Ok(StrongError { max, mean: sum / n as f64, rms: (sq / n as f64).sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub rms: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub regime: ExactRegime,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `ln rms` against `ln dt`.
    pub order: f64,
}

impl ConvergenceTable {
    /// CSV with header `regime,dt,rms,mean,max,order`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("regime,dt,rms,mean,max,order\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{},{}", self.regime.name(), r.dt, r.rms, r.mean, r.max, self.order);
        }
        out
    }
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Strong error of Euler–Maruyama (principal branch) against an exact
/// solution on the same Brownian paths, for each step size.
pub fn convergence_study(
    regime: ExactRegime,
    model: &LqModel,
    policy: &AffineGaussianPolicy,
    x0: f64,
    horizon: f64,
    dts: &[f64],
    ref_factor: usize,
    seed: u64,
    n_paths: usize,
    parallelism: usize,
) -> Result<ConvergenceTable, SimError> {
    let opts = SimOptions { parallelism, store_stride: usize::MAX, branch: DiffusionBranch::Principal };
    let mut rows = Vec::with_capacity(dts.len());
    for &dt in dts {
        let grid = PathGrid::with_horizon(horizon, dt)?;
        let euler = simulate_exploratory(model, policy, x0, grid, seed, n_paths, &opts)?;
        let exact = exact_batch(regime, model, policy, x0, grid, seed, n_paths, ref_factor, &opts)?;
        let err = strong_error(&euler, &exact)?;
        rows.push(ConvergenceRow { dt, rms: err.rms, mean: err.mean, max: err.max });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.dt).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.rms).collect();
    Ok(ConvergenceTable { regime, rows, order: loglog_slope(&x, &y) })
}
