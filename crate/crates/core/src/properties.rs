//! Cross-module properties.

use proptest::prelude::*;

use crate::closed_form::{classical_from_value, exploratory_solution, exploratory_value, lambda_sweep, solve_k2};
use crate::model::fixtures::s1;
use crate::model::LqModel;
use crate::policy_eval::{mc_value, EvalOptions};
use crate::sde::{simulate_exploratory, PathGrid, SimOptions};

fn noisy() -> LqModel {
    LqModel { a: 0.1, b: 1.0, c: 0.3, d: 0.5, m: 1.0, n: 1.0, r: 0.2, p: 0.1, q: -0.3, rho: 1.5, lambda: 0.4 }
}

fn arb_model() -> impl Strategy<Value = LqModel> {
    (
        (-1.0..1.0f64, -1.5..1.5f64, -1.0..1.0f64, -1.0..1.0f64),
        (0.0..2.0f64, 0.2..2.0f64, -1.5..1.5f64),
        (-1.0..1.0f64, -1.0..1.0f64, 0.01..4.0f64, 0.05..1.0f64),
    )
        .prop_map(|((a, b, c, d), (m, n, r), (p, q, rho, lambda))| LqModel {
            a,
            b,
            c,
            d,
            m,
            n,
            r,
            p,
            q,
            rho,
            lambda,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn validated_models_solve_on_the_concave_branch(model in arb_model()) {
        if let Ok(checked) = model.validate() {
            let k2 = solve_k2(&checked).unwrap();
            prop_assert!(k2 <= 0.0);
            if model.m > 0.0 {
                prop_assert!(k2 < 0.0);
            }
            prop_assert!(exploratory_solution(&checked).is_ok());
        }
    }

    #[test]
    fn boundary_models_have_flat_curvature(model in arb_model()) {
        let model = LqModel { m: 0.0, r: 0.0, ..model };
        if model.validate().is_ok() {
            prop_assert_eq!(solve_k2(&model).unwrap(), 0.0);
        }
    }

    #[test]
    fn temperature_leaves_the_mean_and_scales_the_variance(model in arb_model(), scale in 0.01..10.0f64) {
        let hot = LqModel { lambda: model.lambda * scale, ..model };
        if let (Ok(a), Ok(b)) = (model.validate(), hot.validate()) {
            let (va, pa) = exploratory_solution(&a).unwrap();
            let (vb, pb) = exploratory_solution(&b).unwrap();
            prop_assert_eq!((va.k2, va.k1), (vb.k2, vb.k1));
            prop_assert_eq!((pa.slope, pa.intercept), (pb.slope, pb.intercept));
            prop_assert!((pb.variance / pa.variance - scale).abs() <= 4.0 * f64::EPSILON * scale);
        }
    }

    #[test]
    fn value_gap_is_constant_in_the_state(model in arb_model(), x in -10.0..10.0f64) {
        if let Ok(checked) = model.validate() {
            let value = exploratory_value(&checked).unwrap();
            let classical = classical_from_value(&model, &value).unwrap();
            let gap0 = value.k0 - classical.alpha0;
            let gap = value.eval(x) - classical.value().eval(x);
            prop_assert!((gap - gap0).abs() <= 1e-12 * (1.0 + value.eval(x).abs()));
            let row = lambda_sweep(&model, &[model.lambda], x).unwrap()[0];
            prop_assert!((row.value_gap - gap0).abs() <= 1e-12 * (1.0 + gap0.abs()));
        }
    }
}

#[test]
fn solving_does_not_imply_validity() {
    // rho = 1 is below the discount bound 2A = 2, yet the Riccati root is
    // real, negative and the explicit formulas go through.
    let model = LqModel { a: 1.0, ..s1() };
    assert!(model.validate().is_err());
    let value = exploratory_value(&model).unwrap();
    assert!((value.k2 - (-1.0 - 5f64.sqrt()) / 2.0).abs() < 1e-12);
}

#[test]
fn state_independent_pipeline_gives_the_constant_solution() {
    let model = LqModel::state_independent(2.0, 1.0, 0.5, 1.0);
    let (value, policy) = exploratory_solution(&model.validate().unwrap()).unwrap();
    assert_eq!((value.k2, value.k1), (0.0, 0.0));
    assert_eq!((policy.slope, policy.intercept, policy.variance), (0.0, -0.5, 0.5));
    let expected = 0.5 + std::f64::consts::PI.ln();
    assert!((value.k0 - expected).abs() < 1e-15);
}

#[test]
fn discounted_second_moment_decreases_with_the_horizon() {
    let model = noisy();
    let (_, policy) = exploratory_solution(&model.validate().unwrap()).unwrap();
    let grid = PathGrid::new(0.01, 2000).unwrap();
    let opts = SimOptions { store_stride: 500, ..SimOptions::default() };
    let batch = simulate_exploratory(&model, &policy, 1.0, grid, 21, 2000, &opts).unwrap();
    let steps = batch.stored_steps();
    let mut previous = f64::INFINITY;
    for t in [5.0, 10.0, 20.0] {
        let node = steps.iter().position(|&k| (grid.time(k) - t).abs() < 1e-9).unwrap();
        let (_, _, m2, se) = batch.moments_at(node);
        let discount = (-model.rho * t).exp();
        assert!(discount * (m2 - 3.0 * se) <= previous, "t = {t}");
        previous = discount * (m2 + 3.0 * se);
    }
    assert!(previous < 1e-6);
}

#[test]
fn standard_error_follows_the_square_root_law() {
    let model = noisy();
    let (_, policy) = exploratory_solution(&model.validate().unwrap()).unwrap();
    let grid = PathGrid::new(0.01, 500).unwrap();
    let opts = EvalOptions::default();
    let small = mc_value(&model, &policy, 1.0, grid, 22, 500, &opts).unwrap();
    let large = mc_value(&model, &policy, 1.0, grid, 22, 2000, &opts).unwrap();
    let ratio = small.std_error / large.std_error;
    assert!((ratio / 2.0 - 1.0).abs() < 0.2, "ratio {ratio}");
}

// On S1 the paths are deterministic, the standard error is zero and any
// step-size change exceeds it; the noisy reference model is used instead.
#[test]
fn halving_the_step_moves_the_estimate_by_less_than_two_standard_errors() {
    let model = noisy();
    let (_, policy) = exploratory_solution(&model.validate().unwrap()).unwrap();
    let opts = EvalOptions::default();
    let coarse = mc_value(&model, &policy, 1.0, PathGrid::new(0.01, 800).unwrap(), 23, 2000, &opts).unwrap();
    let fine = mc_value(&model, &policy, 1.0, PathGrid::new(0.005, 1600).unwrap(), 23, 2000, &opts).unwrap();
    assert!((coarse.mean - fine.mean).abs() < 2.0 * coarse.std_error.max(fine.std_error));
}

#[test]
fn zero_variance_route_reproduces_the_classical_value() {
    let model = noisy();
    let checked = model.validate().unwrap();
    let value = exploratory_value(&checked).unwrap();
    let classical = classical_from_value(&model, &value).unwrap();
    let grid = PathGrid::new(0.005, 1600).unwrap();
    let est = mc_value(&model, &classical.policy(), 1.0, grid, 24, 2000, &EvalOptions::default()).unwrap();
    assert!(est.agrees_with(classical.value().eval(1.0)), "{est:?} vs {}", classical.value().eval(1.0));
}
