//! Projected stochastic subgradient method with iterate averaging,
//! `x^{j+1} = Π_Φ(x^j − γ_j v₀(x^j, ξ_j))`.
//!
//! Needs an exact projection onto the feasible region Φ, which is only
//! available for simple instances; it serves as a comparison anchor.

use crate::algorithm::{IterateState, ResolvedConfig, RunTrace, StepRecord};
use crate::error::{invalid, Error, Result};
use crate::problem::{SampleStream, StochasticProgram};
use crate::vecops::{all_finite, dist};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// γ = D₀ / (κ_f √T)
    Theory,
    Constant(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub horizon: usize,
    pub step: StepRule,
    pub seed: u64,
    pub run_id: u64,
    /// Report the running average as `x_avg`; otherwise the last iterate.
    pub averaging: bool,
    pub x0: Option<Vec<f64>>,
    pub comparator: Option<Vec<f64>>,
}

impl BaselineConfig {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            step: StepRule::Theory,
            seed: 0,
            run_id: 0,
            averaging: true,
            x0: None,
            comparator: None,
        }
    }

    pub fn with_seed(mut self, seed: u64, run_id: u64) -> Self {
        self.seed = seed;
        self.run_id = run_id;
        self
    }

    pub fn with_step(mut self, step: StepRule) -> Self {
        self.step = step;
        self
    }

    pub fn with_comparator(mut self, comparator: Vec<f64>) -> Self {
        self.comparator = Some(comparator);
        self
    }
}

/// Runs the projected iteration on the same sample stream as
/// [`run_pmmsopt`](crate::algorithm::run_pmmsopt) with equal seed and run id.
///
/// The trace uses the PMMSopt schema: multiplier norms are zero, `sigma` is
/// recorded as 0 and `alpha` as `1/γ`.
pub fn run_projected_sa<P, F>(program: &P, proj_phi: F, config: &BaselineConfig) -> Result<RunTrace>
where
    P: StochasticProgram + ?Sized,
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = program.dim();
    let p = program.num_constraints();
    if config.horizon == 0 {
        return Err(invalid("horizon must be positive"));
    }
    let c = program.constants();
    let gamma = match config.step {
        StepRule::Theory => c.d0 / (c.kappa_f * (config.horizon as f64).sqrt()),
        StepRule::Constant(g) => g,
    };
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("step size must be positive, got {gamma}")));
    }
    let start = match &config.x0 {
        Some(x0) if x0.len() != n => return Err(invalid("x0 has the wrong dimension")),
        Some(x0) => x0.clone(),
        None => vec![0.0; n],
    };
    let mut x = proj_phi(&start);
    let stream = SampleStream::new(config.seed, config.run_id);
    let mut x_sum = vec![0.0; n];
    let mut records = Vec::with_capacity(config.horizon);

    for t in 0..config.horizon {
        let non_finite = |what| Error::NonFinite { iteration: t, what };
        let xi = stream.draw(program, t as u64);
        let f_sample = program.eval_f(&x, &xi);
        let g_sample = program.eval_g(&x, &xi);
        let v = program.subgrad_f(&x, &xi);
        if !f_sample.is_finite() || !all_finite(&g_sample) || !all_finite(&v) {
            return Err(non_finite("oracle output at the current iterate"));
        }
        let (f_comparator, g_comparator) = match &config.comparator {
            Some(cmp) => {
                let fc = program.eval_f(cmp, &xi);
                let gc = program.eval_g(cmp, &xi);
                if !fc.is_finite() || !all_finite(&gc) {
                    return Err(non_finite("F or G at the comparator"));
                }
                (Some(fc), Some(gc))
            }
            None => (None, None),
        };
        let trial: Vec<f64> = x.iter().zip(&v).map(|(xj, vj)| xj - gamma * vj).collect();
        let next = proj_phi(&trial);
        records.push(StepRecord {
            t,
            f_sample,
            g_sample,
            lambda_norm: 0.0,
            step_norm: dist(&next, &x),
            inner_iters: 0,
            inner_converged: true,
            f_comparator,
            g_comparator,
        });
        for (s, xj) in x_sum.iter_mut().zip(&x) {
            *s += xj;
        }
        x = next;
    }

    let t = config.horizon as f64;
    let x_avg = if config.averaging {
        x_sum.into_iter().map(|s| s / t).collect()
    } else {
        x.clone()
    };
    Ok(RunTrace {
        config: ResolvedConfig {
            horizon: config.horizon,
            sigma: 0.0,
            alpha: 1.0 / gamma,
            inner_tol: 0.0,
            inner_max_iter: 0,
            seed: config.seed,
            run_id: config.run_id,
        },
        records,
        x_avg,
        final_state: IterateState {
            t: config.horizon,
            x,
            lambda: vec![0.0; p],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithm::{run_pmmsopt, AlgoConfig};
    use crate::instances::{make_affine_qp, Instance, ScalarToy};
    use std::cell::Cell;

    #[test]
    fn averaged_iterate_near_optimum() {
        let toy = ScalarToy::new(0.5).unwrap();
        let cfg = BaselineConfig::new(10_000)
            .with_step(StepRule::Constant(2.0 / 100.0))
            .with_seed(3, 0);
        let trace = run_projected_sa(&toy, |y| toy.project_feasible(y), &cfg).unwrap();
        assert!(trace.x_avg[0].abs() <= 0.05);
        assert!(trace.records.iter().all(|r| r.g_sample.len() == 1));
    }

    #[test]
    fn constant_objective_freezes_iterates() {
        struct Flat(ScalarToy);
        impl StochasticProgram for Flat {
            fn dim(&self) -> usize {
                1
            }
            fn num_constraints(&self) -> usize {
                1
            }
            fn sample(&self, rng: &mut dyn rand::RngCore) -> crate::problem::Sample {
                self.0.sample(rng)
            }
            fn eval_f(&self, _x: &[f64], _xi: &crate::problem::Sample) -> f64 {
                1.0
            }
            fn eval_g(&self, x: &[f64], xi: &crate::problem::Sample) -> Vec<f64> {
                self.0.eval_g(x, xi)
            }
            fn subgrad_f(&self, _x: &[f64], _xi: &crate::problem::Sample) -> Vec<f64> {
                vec![0.0]
            }
            fn subgrad_g(&self, x: &[f64], xi: &crate::problem::Sample) -> Vec<Vec<f64>> {
                self.0.subgrad_g(x, xi)
            }
            fn domain(&self) -> &crate::problem::Domain {
                self.0.domain()
            }
            fn constants(&self) -> &crate::problem::ConstantsBundle {
                self.0.constants()
            }
        }
        let flat = Flat(ScalarToy::new(0.2).unwrap());
        let mut cfg = BaselineConfig::new(50);
        cfg.x0 = Some(vec![-0.7]);
        let trace = run_projected_sa(&flat, |y| flat.0.project_feasible(y), &cfg).unwrap();
        assert!(trace.records.iter().all(|r| r.f_sample == 1.0 && r.step_norm == 0.0));
        assert_eq!(trace.final_state.x, vec![0.0]);
    }

    #[test]
    fn shares_samples_with_pmmsopt() {
        let toy = ScalarToy::new(0.5).unwrap();
        let pmm = run_pmmsopt(
            &toy,
            &AlgoConfig::theory_schedule(100)
                .with_seed(9, 2)
                .with_comparator(vec![0.0]),
        )
        .unwrap();
        let base_cfg = BaselineConfig::new(100).with_seed(9, 2).with_comparator(vec![0.0]);
        let base = run_projected_sa(&toy, |y| toy.project_feasible(y), &base_cfg).unwrap();
        // G(0, ξ_t) = ζ_t, so equal comparator columns mean equal samples
        for (a, b) in pmm.records.iter().zip(&base.records) {
            assert_eq!(a.g_comparator, b.g_comparator);
        }
        let other = run_projected_sa(&toy, |y| toy.project_feasible(y), &base_cfg.clone().with_seed(9, 3)).unwrap();
        assert_ne!(other.records[0].g_comparator, base.records[0].g_comparator);
    }

    #[test]
    fn iterates_are_feasible() {
        let (qp, d) = make_affine_qp(2, 2, 8, 0.4).unwrap();
        let inst = Instance::AffineQp(qp);
        let cfg = BaselineConfig::new(500).with_seed(1, 1).with_comparator(d.x_star);
        let all = Cell::new(true);
        let trace = run_projected_sa(
            &inst,
            |y| {
                let x = inst.project_feasible(y);
                all.set(all.get() && inst.is_feasible(&x, 1e-9));
                x
            },
            &cfg,
        );
        let _ = trace.unwrap();
        assert!(all.get());
    }
}
