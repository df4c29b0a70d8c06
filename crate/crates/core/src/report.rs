//! Plain-text run summary.

use std::fmt::Write as _;

use crate::closed_form::Solution;
use crate::model::CheckedModel;
use crate::policy_eval::ValueEstimate;

/// A Monte Carlo estimate next to the closed-form value it should reproduce.
#[derive(Debug, Clone, PartialEq)]
pub struct McComparison {
    pub label: String,
    pub estimate: ValueEstimate,
    pub target: f64,
}

impl McComparison {
    pub fn new(label: impl Into<String>, estimate: ValueEstimate, target: f64) -> Self {
        Self { label: label.into(), estimate, target }
    }

    pub fn passed(&self) -> bool {
        self.estimate.agrees_with(self.target)
    }
}

/// Fixed-order summary: model, assumption bound, value coefficients, policy,
/// classical constant, exploration cost, then any Monte Carlo comparisons.
pub fn emit_report(model: &CheckedModel, solution: &Solution, comparisons: &[McComparison]) -> String {
    let mut out = String::new();
    if !model.is_verified() {
        let waived: Vec<String> = model.waived().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "UNVERIFIED (assumption violated): {}", waived.join("; "));
    }
    let m = model.model();
    let _ = writeln!(
        out,
        "model: A={} B={} C={} D={} M={} N={} R={} P={} Q={} rho={} lambda={}",
        m.a, m.b, m.c, m.d, m.m, m.n, m.r, m.p, m.q, m.rho, m.lambda
    );
    let _ = writeln!(out, "assumption bound: {} (rho = {})", solution.assumption_bound, m.rho);
    let v = &solution.value;
    let _ = writeln!(out, "value: k2={} k1={} k0={}", v.k2, v.k1, v.k0);
    let p = &solution.policy;
    let _ = writeln!(out, "policy: slope={} intercept={} variance={}", p.slope, p.intercept, p.variance);
    let _ = writeln!(out, "classical alpha0: {}", solution.classical.alpha0);
    let _ = writeln!(out, "exploration cost: {}", solution.cost);
    if !comparisons.is_empty() {
        let _ = writeln!(out, "monte carlo:");
        for c in comparisons {
            let e = &c.estimate;
            let _ = writeln!(
                out,
                "  {}: estimate={} closed_form={} |diff|={} tolerance={} (3*se={} + truncation={}) n_paths={} dt={} T={} seed={} {}",
                c.label,
                e.mean,
                c.target,
                (e.mean - c.target).abs(),
                e.tolerance(),
                3.0 * e.std_error,
                e.truncation_bound,
                e.n_paths,
                e.dt,
                e.horizon,
                e.seed,
                if c.passed() { "PASS" } else { "FAIL" }
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fixtures::s1, LqModel};

    fn estimate(mean: f64) -> ValueEstimate {
        ValueEstimate { mean, std_error: 0.01, truncation_bound: 0.001, n_paths: 10, dt: 0.01, horizon: 1.0, seed: 0 }
    }

    #[test]
    fn solve_only_report_has_no_mc_section() {
        let checked = s1().validate().unwrap();
        let text = emit_report(&checked, &Solution::solve(&checked).unwrap(), &[]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("model: A=0 B=1"));
        assert!(lines[2].starts_with("value: k2=-0.618033988749"));
        assert_eq!(lines[5], "exploration cost: 0.1");
        assert!(!text.contains("monte carlo"));
        assert!(!text.contains("UNVERIFIED"));
    }

    #[test]
    fn comparisons_carry_verdicts() {
        let checked = s1().validate().unwrap();
        let sol = Solution::solve(&checked).unwrap();
        let target = sol.value.eval(1.0);
        let text = emit_report(
            &checked,
            &sol,
            &[
                McComparison::new("V(x0)", estimate(target + 0.02), target),
                McComparison::new("cost", estimate(target + 0.5), target),
            ],
        );
        let mc: Vec<&str> = text.lines().skip_while(|l| *l != "monte carlo:").collect();
        assert_eq!(mc.len(), 3);
        assert!(mc[1].trim_start().starts_with("V(x0):") && mc[1].ends_with("PASS"));
        assert!(mc[2].ends_with("FAIL"));
    }

    #[test]
    fn override_is_stamped() {
        let model = LqModel { r: 1.0, ..s1() };
        assert!(model.validate().is_err());
        let checked = model.validate_with_override().unwrap();
        assert!(!checked.is_verified());
        let text = emit_report(&checked, &Solution::solve(&checked).unwrap(), &[]);
        assert!(text.starts_with("UNVERIFIED (assumption violated)"));
        assert!(text.lines().next().unwrap().contains("R²<MN"));
    }
}
