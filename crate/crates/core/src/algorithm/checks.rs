//! Per-iteration inequalities that every trace must satisfy.
//!
//! [`InequalityChecker`] plugs into [`run_pmmsopt_observed`](super::run_pmmsopt_observed)
//! and tests, at each step:
//!
//! * `| ‖λ^{t+1}‖ − ‖λᵗ‖ | <= σ‖G(x^{t+1}, ξ_t)‖ <= σν_g`
//! * `‖λ^{t+1}‖² <= ‖λᵗ‖² + 2σ⟨λᵗ, G(x^{t+1}, ξ_t)⟩ + σ²ν_g²`
//! * `‖x^{t+1} − xᵗ‖ <= step_bound(‖λᵗ‖) · slack`
//! * the three-point inequality of the proximal step against random probes in X₀.
//!
//! [`cumulative_violations`] checks the cumulative constraint inequality on a finished trace.

use serde::Serialize;

use crate::problem::{ConstantsBundle, StochasticProgram};
use crate::vecops::{dist, dot, norm};

use super::{step_bound, RunTrace, StepView};

/// Relative allowance for floating-point rounding in the "exact" inequalities.
const ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct InequalityReport {
    pub steps: usize,
    pub multiplier_step_violations: usize,
    pub multiplier_square_violations: usize,
    pub step_bound_violations: usize,
    pub three_point_checks: usize,
    pub three_point_violations: usize,
    pub unconverged_steps: usize,
    /// Largest `lhs − rhs` seen in the three-point inequality (negative is good).
    pub worst_three_point_gap: f64,
    /// Largest `step / step_bound` ratio seen.
    pub worst_step_ratio: f64,
}

impl InequalityReport {
    pub fn total_violations(&self) -> usize {
        self.multiplier_step_violations
            + self.multiplier_square_violations
            + self.step_bound_violations
            + self.three_point_violations
    }

    pub fn merge(&mut self, other: &InequalityReport) {
        self.steps += other.steps;
        self.multiplier_step_violations += other.multiplier_step_violations;
        self.multiplier_square_violations += other.multiplier_square_violations;
        self.step_bound_violations += other.step_bound_violations;
        self.three_point_checks += other.three_point_checks;
        self.three_point_violations += other.three_point_violations;
        self.unconverged_steps += other.unconverged_steps;
        self.worst_three_point_gap = self.worst_three_point_gap.max(other.worst_three_point_gap);
        self.worst_step_ratio = self.worst_step_ratio.max(other.worst_step_ratio);
    }
}

pub struct InequalityChecker<'a, P: StochasticProgram + ?Sized> {
    program: &'a P,
    constants: ConstantsBundle,
    inner_tol: f64,
    probes: Vec<Vec<f64>>,
    probe_steps: usize,
    step_slack: f64,
    report: InequalityReport,
}

impl<'a, P: StochasticProgram + ?Sized> InequalityChecker<'a, P> {
    /// `probes` are tested against the three-point inequality during the first
    /// `probe_steps` iterations; `step_slack` multiplies the step bound.
    pub fn new(program: &'a P, inner_tol: f64, probes: Vec<Vec<f64>>, probe_steps: usize, step_slack: f64) -> Self {
        Self {
            program,
            constants: program.constants().clone(),
            inner_tol,
            probes,
            probe_steps,
            step_slack,
            report: InequalityReport {
                worst_three_point_gap: f64::NEG_INFINITY,
                ..Default::default()
            },
        }
    }

    pub fn observe(&mut self, v: &StepView<'_>) {
        let c = &self.constants;
        let p = v.lambda_prev.len();
        let r = &mut self.report;
        r.steps += 1;
        if !v.record.inner_converged {
            r.unconverged_steps += 1;
        }

        let ln = norm(v.lambda_next);
        let lp = norm(v.lambda_prev);
        let g_norm = norm(v.g_next);
        let jump = (ln - lp).abs();
        let cap = v.sigma * g_norm;
        if jump > cap * (1.0 + ROUNDING) + f64::EPSILON || cap > v.sigma * c.nu_g * (1.0 + ROUNDING) {
            r.multiplier_step_violations += 1;
        }

        let rhs = lp * lp + 2.0 * v.sigma * dot(v.lambda_prev, v.g_next) + (v.sigma * c.nu_g).powi(2);
        if ln * ln > rhs + ROUNDING * (lp * lp + rhs.abs() + 1.0) {
            r.multiplier_square_violations += 1;
        }

        if p == 0 || 2.0 * v.alpha > p as f64 * c.kappa_g.powi(2) * v.sigma {
            let bound = step_bound(c, p, v.sigma, v.alpha, lp).expect("step condition checked");
            let step = dist(v.x_next, v.x_prev);
            r.worst_step_ratio = r.worst_step_ratio.max(step / bound);
            if step > bound * self.step_slack {
                r.step_bound_violations += 1;
            }
        }

        if v.t < self.probe_steps {
            let inv2s = 1.0 / (2.0 * v.sigma);
            let lhs = self.program.eval_f(v.x_next, v.xi)
                + inv2s * ln * ln
                + 0.5 * v.alpha * dist(v.x_next, v.x_prev).powi(2);
            let allowance = 1e-6 + v.alpha * self.inner_tol * c.d0;
            for probe in &self.probes {
                let g = self.program.eval_g(probe, v.xi);
                let shifted: f64 = v
                    .lambda_prev
                    .iter()
                    .zip(&g)
                    .map(|(l, gi)| (l + v.sigma * gi).max(0.0).powi(2))
                    .sum();
                let rhs = self.program.eval_f(probe, v.xi)
                    + inv2s * shifted
                    + 0.5 * v.alpha * (dist(probe, v.x_prev).powi(2) - dist(probe, v.x_next).powi(2));
                let gap = lhs - rhs;
                r.three_point_checks += 1;
                r.worst_three_point_gap = r.worst_three_point_gap.max(gap);
                if gap > allowance {
                    r.three_point_violations += 1;
                }
            }
        }
    }

    pub fn report(&self) -> &InequalityReport {
        &self.report
    }

    pub fn into_report(self) -> InequalityReport {
        self.report
    }
}

/// Constraints i for which `Σ_{t<T} G_i(xᵗ, ξ_t) > λ_i^T/σ + κ_g Σ_{t<T} ‖x^{t+1} − xᵗ‖ + T·1e-8`.
pub fn cumulative_violations(trace: &RunTrace, kappa_g: f64) -> Vec<usize> {
    let sigma = trace.config.sigma;
    let path: f64 = trace.records.iter().map(|r| r.step_norm).sum();
    let slack = trace.records.len() as f64 * 1e-8;
    trace
        .constraint_sums()
        .iter()
        .zip(&trace.final_state.lambda)
        .enumerate()
        .filter(|(_, (sum, lam))| **sum > *lam / sigma + kappa_g * path + slack)
        .map(|(i, _)| i)
        .collect()
}
