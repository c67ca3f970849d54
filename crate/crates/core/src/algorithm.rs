//! The stochastic proximal method of multipliers.
//!
//! Starting from `λ⁰ = 0`, every iteration draws ξ_t and sets
//!
//! ```text
//! x^{t+1} = argmin_{x ∈ X₀}  L_σ(x, λᵗ; ξ_t) + (α/2)‖x − xᵗ‖²
//! λ^{t+1} = [λᵗ + σ G(x^{t+1}, ξ_t)]_+
//! ```
//!
//! with `L_σ(x, λ; ξ) = F(x, ξ) + (‖[λ + σG(x, ξ)]_+‖² − ‖λ‖²) / (2σ)`.
//! The argmin is computed inexactly by [`solve_subproblem`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::problem::{ConstantsBundle, Sample, SampleStream, StochasticProgram};
use crate::vecops::{all_finite, dist, dot, norm};

pub mod checks;

pub const DEFAULT_INNER_TOL: f64 = 1e-8;
pub const DEFAULT_INNER_MAX_ITER: usize = 10_000;

/// How σ or α is derived from the horizon T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRule {
    Fixed(f64),
    /// `T^{-1/2}`
    InvSqrtHorizon,
    /// `T^{1/2}`
    SqrtHorizon,
}

impl ParamRule {
    pub fn resolve(&self, horizon: usize) -> f64 {
        let t = horizon as f64;
        match *self {
            ParamRule::Fixed(v) => v,
            ParamRule::InvSqrtHorizon => 1.0 / t.sqrt(),
            ParamRule::SqrtHorizon => t.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgoConfig {
    pub horizon: usize,
    pub sigma: ParamRule,
    pub alpha: ParamRule,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Master seed of the sample stream.
    pub seed: u64,
    /// Stream id under the master seed.
    pub run_id: u64,
    /// Starting point; `project_X0(0)` when absent.
    pub x0: Option<Vec<f64>>,
    /// Point whose sampled F and G are recorded on the same ξ_t.
    pub comparator: Option<Vec<f64>>,
}

impl AlgoConfig {
    pub fn new(horizon: usize, sigma: ParamRule, alpha: ParamRule) -> Self {
        Self {
            horizon,
            sigma,
            alpha,
            inner_tol: DEFAULT_INNER_TOL,
            inner_max_iter: DEFAULT_INNER_MAX_ITER,
            seed: 0,
            run_id: 0,
            x0: None,
            comparator: None,
        }
    }

    /// σ = T^{-1/2}, α = T^{1/2}: the schedule under which the regret bounds hold.
    pub fn theory_schedule(horizon: usize) -> Self {
        Self::new(horizon, ParamRule::InvSqrtHorizon, ParamRule::SqrtHorizon)
    }

    pub fn fixed(horizon: usize, sigma: f64, alpha: f64) -> Self {
        Self::new(horizon, ParamRule::Fixed(sigma), ParamRule::Fixed(alpha))
    }

    pub fn with_seed(mut self, seed: u64, run_id: u64) -> Self {
        self.seed = seed;
        self.run_id = run_id;
        self
    }

    pub fn with_inner(mut self, tol: f64, max_iter: usize) -> Self {
        self.inner_tol = tol;
        self.inner_max_iter = max_iter;
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn with_comparator(mut self, comparator: Vec<f64>) -> Self {
        self.comparator = Some(comparator);
        self
    }

    /// Resolves σ and α for this horizon and checks `2α − pκ_g²σ > 0`.
    pub fn resolve(&self, p: usize, kappa_g: f64) -> Result<ResolvedConfig> {
        if self.horizon == 0 {
            return Err(invalid("horizon must be positive"));
        }
        if !(self.inner_tol > 0.0) || self.inner_max_iter == 0 {
            return Err(invalid("inner solver needs a positive tolerance and budget"));
        }
        let sigma = self.sigma.resolve(self.horizon);
        let alpha = self.alpha.resolve(self.horizon);
        if !(sigma > 0.0 && sigma.is_finite()) || !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid(format!(
                "sigma and alpha must be positive, got {sigma}, {alpha}"
            )));
        }
        let margin = 2.0 * alpha - p as f64 * kappa_g * kappa_g * sigma;
        if p > 0 && margin <= 0.0 {
            return Err(Error::StepCondition(margin));
        }
        Ok(ResolvedConfig {
            horizon: self.horizon,
            sigma,
            alpha,
            inner_tol: self.inner_tol,
            inner_max_iter: self.inner_max_iter,
            seed: self.seed,
            run_id: self.run_id,
        })
    }
}

/// Configuration echo with σ and α resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub horizon: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub seed: u64,
    pub run_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub t: usize,
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Quantities of iteration t, evaluated at the pre-update iterate xᵗ with ξ_t.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub f_sample: f64,
    pub g_sample: Vec<f64>,
    /// `‖λᵗ‖`
    pub lambda_norm: f64,
    /// `‖x^{t+1} − xᵗ‖`
    pub step_norm: f64,
    pub inner_iters: usize,
    pub inner_converged: bool,
    pub f_comparator: Option<f64>,
    pub g_comparator: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub config: ResolvedConfig,
    pub records: Vec<StepRecord>,
    /// `(1/T) Σ_{t<T} xᵗ`
    pub x_avg: Vec<f64>,
    /// `(x^T, λ^T)`
    pub final_state: IterateState,
}

impl RunTrace {
    pub fn num_constraints(&self) -> usize {
        self.final_state.lambda.len()
    }

    /// `Σ_t G_i(xᵗ, ξ_t)` for each constraint.
    pub fn constraint_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.num_constraints()];
        for r in &self.records {
            for (s, g) in sums.iter_mut().zip(&r.g_sample) {
                *s += g;
            }
        }
        sums
    }

    pub fn unconverged_steps(&self) -> usize {
        self.records.iter().filter(|r| !r.inner_converged).count()
    }
}

fn shifted_multiplier(lambda: &[f64], g: &[f64], sigma: f64) -> Vec<f64> {
    lambda.iter().zip(g).map(|(l, gi)| (l + sigma * gi).max(0.0)).collect()
}

/// Sampled augmented Lagrangian `F + (‖[λ + σG]_+‖² − ‖λ‖²) / (2σ)`.
pub fn aug_lagrangian<P: StochasticProgram + ?Sized>(
    program: &P,
    x: &[f64],
    lambda: &[f64],
    xi: &Sample,
    sigma: f64,
) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    let f = program.eval_f(x, xi);
    if lambda.is_empty() {
        return Ok(f);
    }
    let g = program.eval_g(x, xi);
    let shifted = shifted_multiplier(lambda, &g, sigma);
    Ok(f + (dot(&shifted, &shifted) - dot(lambda, lambda)) / (2.0 * sigma))
}

/// `v₀(x, ξ) + V(x, ξ) [λ + σG(x, ξ)]_+`, a subgradient of [`aug_lagrangian`] in x.
pub fn aug_lagrangian_subgrad<P: StochasticProgram + ?Sized>(
    program: &P,
    x: &[f64],
    lambda: &[f64],
    xi: &Sample,
    sigma: f64,
) -> Vec<f64> {
    let mut d = program.subgrad_f(x, xi);
    if lambda.is_empty() {
        return d;
    }
    let g = program.eval_g(x, xi);
    let shifted = shifted_multiplier(lambda, &g, sigma);
    let cols = program.subgrad_g(x, xi);
    for (w, col) in shifted.iter().zip(&cols) {
        if *w > 0.0 {
            for (dj, cj) in d.iter_mut().zip(col) {
                *dj += w * cj;
            }
        }
    }
    d
}

/// Stopping rule of the inner solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSolver {
    /// Target for the fixed-point residual `‖x − Π(x − d(x)/α)‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InnerSolver {
    fn default() -> Self {
        Self {
            tol: DEFAULT_INNER_TOL,
            max_iter: DEFAULT_INNER_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemSolution {
    pub x: Vec<f64>,
    pub iters: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Approximately minimizes `L_σ(x, λᵗ; ξ) + (α/2)‖x − xᵗ‖²` over X₀.
///
/// Projected subgradient with step `2 / (α(k + 2))`, started at xᵗ. The
/// returned point is the iterate with the smallest fixed-point residual; if
/// that residual is still above `solver.tol` after the budget the solution is
/// marked unconverged.
pub fn solve_subproblem<P: StochasticProgram + ?Sized>(
    program: &P,
    x_t: &[f64],
    lambda_t: &[f64],
    xi: &Sample,
    sigma: f64,
    alpha: f64,
    solver: &InnerSolver,
) -> Result<SubproblemSolution> {
    if !(alpha > 0.0) || !(sigma > 0.0) {
        return Err(invalid("sigma and alpha must be positive"));
    }
    let mut x = x_t.to_vec();
    let mut best_x = x.clone();
    let mut best_res = f64::INFINITY;
    let mut trial = vec![0.0; x.len()];
    let mut k = 0;
    loop {
        let mut d = aug_lagrangian_subgrad(program, &x, lambda_t, xi, sigma);
        for ((dj, xj), tj) in d.iter_mut().zip(&x).zip(x_t) {
            *dj += alpha * (xj - tj);
        }
        if !all_finite(&d) {
            return Err(Error::NonFinite {
                iteration: 0,
                what: "subproblem subgradient",
            });
        }
        for ((tr, xj), dj) in trial.iter_mut().zip(&x).zip(&d) {
            *tr = xj - dj / alpha;
        }
        let projected = program.project_x0(&trial);
        let res = dist(&x, &projected);
        if res < best_res {
            best_res = res;
            best_x.clone_from(&x);
        }
        if res <= solver.tol || k >= solver.max_iter {
            break;
        }
        let step = 2.0 / (alpha * (k as f64 + 2.0));
        for ((tr, xj), dj) in trial.iter_mut().zip(&x).zip(&d) {
            *tr = xj - step * dj;
        }
        x = program.project_x0(&trial);
        k += 1;
    }
    Ok(SubproblemSolution {
        x: best_x,
        iters: k,
        residual: best_res,
        converged: best_res <= solver.tol,
    })
}

/// `[λ + σ g]_+`
pub fn update_multiplier(lambda: &[f64], g_val: &[f64], sigma: f64) -> Vec<f64> {
    shifted_multiplier(lambda, g_val, sigma)
}

/// Upper bound on `‖x^{t+1} − xᵗ‖` given `‖λᵗ‖`:
/// `(2κ_f + √p κ_g ‖λ‖ + ν_g √p κ_g σ) / (2α − pκ_g²σ)`.
pub fn step_bound(constants: &ConstantsBundle, p: usize, sigma: f64, alpha: f64, lambda_norm: f64) -> Result<f64> {
    let kg = constants.kappa_g;
    let pf = p as f64;
    let denom = 2.0 * alpha - pf * kg * kg * sigma;
    if denom <= 0.0 {
        return Err(Error::StepCondition(denom));
    }
    let sp = pf.sqrt();
    Ok((2.0 * constants.kappa_f + sp * kg * lambda_norm + constants.nu_g * sp * kg * sigma) / denom)
}

/// Everything known about iteration t once x^{t+1} and λ^{t+1} are computed.
#[derive(Debug)]
pub struct StepView<'a> {
    pub t: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub xi: &'a Sample,
    pub x_prev: &'a [f64],
    pub x_next: &'a [f64],
    pub lambda_prev: &'a [f64],
    pub lambda_next: &'a [f64],
    /// `G(x^{t+1}, ξ_t)`, the value that drove the multiplier update.
    pub g_next: &'a [f64],
    pub record: &'a StepRecord,
}

/// Runs T iterations. Deterministic in `(program, config)`.
pub fn run_pmmsopt<P: StochasticProgram + ?Sized>(program: &P, config: &AlgoConfig) -> Result<RunTrace> {
    run_pmmsopt_observed(program, config, |_| {})
}

/// [`run_pmmsopt`] with a callback invoked after every iteration.
pub fn run_pmmsopt_observed<P, O>(program: &P, config: &AlgoConfig, mut observer: O) -> Result<RunTrace>
where
    P: StochasticProgram + ?Sized,
    O: FnMut(&StepView<'_>),
{
    let n = program.dim();
    let p = program.num_constraints();
    let resolved = config.resolve(p, program.constants().kappa_g)?;
    let stream = SampleStream::new(config.seed, config.run_id);
    let solver = InnerSolver {
        tol: resolved.inner_tol,
        max_iter: resolved.inner_max_iter,
    };

    let mut x = match &config.x0 {
        Some(x0) if x0.len() != n => return Err(invalid("x0 has the wrong dimension")),
        Some(x0) => program.project_x0(x0),
        None => program.project_x0(&vec![0.0; n]),
    };
    if let Some(c) = &config.comparator {
        if c.len() != n {
            return Err(invalid("comparator has the wrong dimension"));
        }
    }
    let mut lambda = vec![0.0; p];
    let mut x_sum = vec![0.0; n];
    let mut records = Vec::with_capacity(resolved.horizon);

    for t in 0..resolved.horizon {
        let non_finite = |what| Error::NonFinite { iteration: t, what };
        let xi = stream.draw(program, t as u64);

        let f_sample = program.eval_f(&x, &xi);
        let g_sample = program.eval_g(&x, &xi);
        if !f_sample.is_finite() || !all_finite(&g_sample) {
            return Err(non_finite("F or G at the current iterate"));
        }
        let (f_comparator, g_comparator) = match &config.comparator {
            Some(c) => {
                let fc = program.eval_f(c, &xi);
                let gc = program.eval_g(c, &xi);
                if !fc.is_finite() || !all_finite(&gc) {
                    return Err(non_finite("F or G at the comparator"));
                }
                (Some(fc), Some(gc))
            }
            None => (None, None),
        };

        let sol = solve_subproblem(program, &x, &lambda, &xi, resolved.sigma, resolved.alpha, &solver).map_err(
            |e| match e {
                Error::NonFinite { what, .. } => Error::NonFinite { iteration: t, what },
                other => other,
            },
        )?;
        let g_next = program.eval_g(&sol.x, &xi);
        if !all_finite(&g_next) {
            return Err(non_finite("G at the new iterate"));
        }
        let lambda_next = update_multiplier(&lambda, &g_next, resolved.sigma);

        let record = StepRecord {
            t,
            f_sample,
            g_sample,
            lambda_norm: norm(&lambda),
            step_norm: dist(&sol.x, &x),
            inner_iters: sol.iters,
            inner_converged: sol.converged,
            f_comparator,
            g_comparator,
        };
        observer(&StepView {
            t,
            sigma: resolved.sigma,
            alpha: resolved.alpha,
            xi: &xi,
            x_prev: &x,
            x_next: &sol.x,
            lambda_prev: &lambda,
            lambda_next: &lambda_next,
            g_next: &g_next,
            record: &record,
        });
        records.push(record);

        for (s, v) in x_sum.iter_mut().zip(&x) {
            *s += v;
        }
        x = sol.x;
        lambda = lambda_next;
    }

    debug_assert!(lambda.iter().all(|&l| l >= 0.0));
    let t = resolved.horizon as f64;
    Ok(RunTrace {
        x_avg: x_sum.into_iter().map(|s| s / t).collect(),
        records,
        final_state: IterateState {
            t: resolved.horizon,
            x,
            lambda,
        },
        config: resolved,
    })
}
