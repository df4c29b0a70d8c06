use std::fmt::Write as _;
use std::fs;

use exploratory_lq::closed_form::{
    classical_from_value, exploration_cost_decomposition, hjb_residual, lambda_sweep, HjbKind, Solution,
};
use exploratory_lq::config::RunConfig;
use exploratory_lq::model::{derived_coeffs, CheckedModel};
use exploratory_lq::moments::MomentCurves;
use exploratory_lq::policy_eval::{mc_exploration_cost, mc_value, EvalError, EvalOptions};
use exploratory_lq::report::{emit_report, McComparison};
use exploratory_lq::sde::{convergence_study, simulate_exploratory, ExactRegime, PathGrid, SimError, SimOptions};
use exploratory_lq::SolveError;
use serde::Serialize;
use thiserror::Error;

use crate::output::Artifacts;
use crate::{Cli, Command};

#[derive(Debug, Error)]
pub enum Failure {
    #[error("config error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Io(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<SolveError> for Failure {
    fn from(e: SolveError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

/// Everything a command needs after parsing and validation.
struct Context {
    cfg: RunConfig,
    model: CheckedModel,
    solution: Solution,
    seed: Option<u64>,
    parallelism: usize,
    out: Artifacts,
}

impl Context {
    fn seed(&self) -> Result<u64, Failure> {
        self.seed.ok_or_else(|| Failure::Config("sim.seed (or --seed) is required for this command".into()))
    }

    fn sim_grid(&self) -> Result<PathGrid, Failure> {
        Ok(PathGrid::new(self.cfg.sim.dt, self.cfg.sim.n_steps)?)
    }

    fn eval_options(&self) -> EvalOptions {
        EvalOptions { parallelism: self.parallelism, ..EvalOptions::default() }
    }

    fn report(&self, comparisons: &[McComparison]) -> Result<(), Failure> {
        self.out.text("report.txt", &emit_report(&self.model, &self.solution, comparisons))
    }
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", cli.config.display())))?;
    let cfg = RunConfig::parse(&text).map_err(|e| Failure::Config(e.to_string()))?;
    let seed = cli.seed.or(cfg.sim.seed);
    if cli.command.is_stochastic() && seed.is_none() {
        return Err(Failure::Config("sim.seed (or --seed) is required for this command".into()));
    }
    let validated = if cli.override_assumptions { cfg.model.validate_with_override() } else { cfg.model.validate() };
    let model = validated.map_err(|e| Failure::Validation(e.to_string()))?;
    if !model.is_verified() {
        let waived: Vec<String> = model.waived().iter().map(|v| v.to_string()).collect();
        eprintln!("exlq: warning: UNVERIFIED (assumption violated): {}", waived.join("; "));
    }
    let solution = Solution::solve(&model)?;
    let parallelism = cli.parallelism.unwrap_or(cfg.sim.parallelism).max(1);
    let out = Artifacts::new(&cli.out, cfg.format)?;
    let ctx = Context { cfg, model, solution, seed, parallelism, out };

    match cli.command {
        Command::Solve => solve(&ctx),
        Command::Residual => residual(&ctx),
        Command::Simulate => simulate(&ctx),
        Command::Evaluate => evaluate(&ctx),
        Command::Cost => cost(&ctx),
        Command::Sweep => sweep(&ctx),
        Command::ExactVsEuler => exact_vs_euler(&ctx),
        Command::Moments => moments(&ctx),
    }
}

fn solve(ctx: &Context) -> Result<(), Failure> {
    ctx.out.json("solution.json", &ctx.solution.record())?;
    ctx.report(&[])
}

fn residual(ctx: &Context) -> Result<(), Failure> {
    let value = ctx.solution.value;
    let classical = ctx.solution.classical.value();
    let mut csv = String::from("x,value,residual,classical_value,classical_residual\n");
    for x in ctx.cfg.residual.grid() {
        let r = hjb_residual(&ctx.model, &value, x, HjbKind::Exploratory)?;
        let rc = hjb_residual(&ctx.model, &classical, x, HjbKind::Classical)?;
        let _ = writeln!(csv, "{x},{},{r},{},{rc}", value.eval(x), classical.eval(x));
    }
    ctx.out.table("residual", &csv)?;
    ctx.report(&[])
}

fn simulate(ctx: &Context) -> Result<(), Failure> {
    let opts = SimOptions { parallelism: ctx.parallelism, store_stride: ctx.cfg.sim.stride, ..SimOptions::default() };
    let batch = simulate_exploratory(
        &ctx.model,
        &ctx.solution.policy,
        ctx.cfg.sim.x0,
        ctx.sim_grid()?,
        ctx.seed()?,
        ctx.cfg.sim.n_paths,
        &opts,
    )?;
    if batch.n_diverged() > 0 {
        eprintln!("exlq: warning: {} of {} paths diverged", batch.n_diverged(), batch.n_paths);
    }
    ctx.out.table("trajectories", &batch.to_csv())?;
    ctx.out.json("summary.json", &batch.summary())?;
    ctx.report(&[])
}

#[derive(Serialize)]
struct EstimateFile {
    #[serde(flatten)]
    estimate: exploratory_lq::policy_eval::EstimateRecord,
    x0: f64,
    closed_form: f64,
    abs_diff: f64,
    tolerance: f64,
    pass: bool,
}

fn evaluate(ctx: &Context) -> Result<(), Failure> {
    let x0 = ctx.cfg.sim.x0;
    let est = mc_value(
        &ctx.model,
        &ctx.solution.policy,
        x0,
        ctx.sim_grid()?,
        ctx.seed()?,
        ctx.cfg.sim.n_paths,
        &ctx.eval_options(),
    )?;
    let target = ctx.solution.value.eval(x0);
    let cmp = McComparison::new("V(x0)", est, target);
    ctx.out.json(
        "estimate.json",
        &EstimateFile {
            estimate: est.record(),
            x0,
            closed_form: target,
            abs_diff: (est.mean - target).abs(),
            tolerance: est.tolerance(),
            pass: cmp.passed(),
        },
    )?;
    ctx.report(&[cmp])
}

#[derive(Serialize)]
struct CostFile {
    x0: f64,
    closed_form: f64,
    decomposition: f64,
    monte_carlo: exploratory_lq::policy_eval::EstimateRecord,
    abs_diff: f64,
    tolerance: f64,
    pass: bool,
}

fn cost(ctx: &Context) -> Result<(), Failure> {
    let x0 = ctx.cfg.sim.x0;
    let est =
        mc_exploration_cost(&ctx.model, x0, ctx.sim_grid()?, ctx.seed()?, ctx.cfg.sim.n_paths, &ctx.eval_options())?;
    let classical = classical_from_value(&ctx.model, &ctx.solution.value)?;
    let decomposition = exploration_cost_decomposition(&ctx.model, &ctx.solution.value, &classical, x0)?;
    let cmp = McComparison::new("exploration cost", est, ctx.solution.cost);
    ctx.out.json(
        "cost.json",
        &CostFile {
            x0,
            closed_form: ctx.solution.cost,
            decomposition,
            monte_carlo: est.record(),
            abs_diff: (est.mean - ctx.solution.cost).abs(),
            tolerance: est.tolerance(),
            pass: cmp.passed(),
        },
    )?;
    ctx.report(&[cmp])
}

fn sweep(ctx: &Context) -> Result<(), Failure> {
    let probe = ctx.cfg.sweep.probe_x;
    let rows = lambda_sweep(&ctx.model, &ctx.cfg.sweep.lambdas, probe)?;
    let mut csv = String::from("lambda,variance,value_gap,cost,mean_at_probe,probe_x\n");
    for r in rows {
        let _ = writeln!(csv, "{},{},{},{},{},{probe}", r.lambda, r.variance, r.value_gap, r.cost, r.mean_at_probe);
    }
    ctx.out.table("sweep", &csv)?;
    ctx.report(&[])
}

fn exact_vs_euler(ctx: &Context) -> Result<(), Failure> {
    let x0 = ctx.cfg.sim.x0;
    let policy = &ctx.solution.policy;
    let regime = ExactRegime::detect(&ctx.model, policy, x0)
        .ok_or_else(|| Failure::Numerical("no exact solution is available for this model and initial state".into()))?;
    let table = convergence_study(
        regime,
        &ctx.model,
        policy,
        x0,
        ctx.cfg.exact.horizon,
        &ctx.cfg.exact.dts,
        ctx.cfg.exact.ref_factor,
        ctx.seed()?,
        ctx.cfg.sim.n_paths,
        ctx.parallelism,
    )?;
    ctx.out.table("convergence", &table.to_csv())?;
    ctx.report(&[])
}

fn moments(ctx: &Context) -> Result<(), Failure> {
    let x0 = ctx.cfg.sim.x0;
    let grid = ctx.sim_grid()?;
    let opts = SimOptions { parallelism: ctx.parallelism, store_stride: ctx.cfg.sim.stride, ..SimOptions::default() };
    let batch =
        simulate_exploratory(&ctx.model, &ctx.solution.policy, x0, grid, ctx.seed()?, ctx.cfg.sim.n_paths, &opts)?;
    let times: Vec<f64> = batch.stored_steps().iter().map(|&k| grid.time(k)).collect();
    let coeffs = derived_coeffs(&ctx.model, &ctx.solution.policy);
    let curves = MomentCurves::evaluate(&coeffs, x0, &times);
    ctx.out.table("moments", &curves.to_csv())?;

    let mut csv = String::from("t,n,m,mean_mc,se_mean,m2_mc,se_m2,n_within_4se,m_within_4se\n");
    for (i, t) in times.iter().enumerate() {
        let (mean, se_mean, m2, se_m2) = batch.moments_at(i);
        let n_ok = (mean - curves.n[i]).abs() <= 4.0 * se_mean + 1e-12 * curves.n[i].abs().max(1.0);
        let m_ok = (m2 - curves.m[i]).abs() <= 4.0 * se_m2 + 1e-12 * curves.m[i].abs().max(1.0);
        let _ = writeln!(
            csv,
            "{t},{},{},{mean},{se_mean},{m2},{se_m2},{},{}",
            curves.n[i], curves.m[i], n_ok as u8, m_ok as u8
        );
    }
    ctx.out.table("moments_mc", &csv)?;
    ctx.report(&[])
}
