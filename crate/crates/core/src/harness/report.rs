use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::trace::TraceTable;
use crate::bounds::{
    beta_bound, kappa_constants, omega_c, omega_confidence, omega_o, pi_bound, window_len, BoundConstants,
};
use crate::error::{invalid, Error, Result};
use crate::instances::InstanceDescriptor;
use crate::problem::ConstantsBundle;

pub const SCHEMA_VERSION: u32 = 1;

/// Normalized regrets below this are clamped before a log-log fit.
pub const RATE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRegret {
    pub run_id: u64,
    pub horizon: usize,
    pub seed: u64,
    /// `Σ F(xᵗ,ξ_t) − Σ F(x*,ξ_t)`; absent when the trace has no comparator columns.
    pub objective: Option<f64>,
    pub objective_normalized: Option<f64>,
    /// `Σ G_i(xᵗ,ξ_t)` per constraint.
    pub constraint: Vec<f64>,
    pub constraint_normalized: Vec<f64>,
    pub max_lambda_norm: f64,
    pub unconverged_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            count: values.len(),
            mean,
            std: var.sqrt(),
            min: sorted[0],
            q05: quantile(&sorted, 0.05),
            q25: quantile(&sorted, 0.25),
            median: quantile(&sorted, 0.5),
            q75: quantile(&sorted, 0.75),
            q95: quantile(&sorted, 0.95),
            max: sorted[sorted.len() - 1],
        })
    }
}

/// Linear interpolation between order statistics of an ascending slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaBounds {
    pub eta: f64,
    pub pi: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonBounds {
    pub window: usize,
    pub kappa_o_sqrt_t: f64,
    pub kappa_c_sqrt_t: f64,
    pub omega_c: f64,
    pub omega_o: f64,
    /// `1 − exp(−T^{1/4})`
    pub omega_confidence: f64,
    pub tail: Vec<EtaBounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailEstimate {
    pub runs: usize,
    pub within: usize,
    pub fraction: f64,
    pub level: f64,
}

impl TailEstimate {
    pub fn meets_level(&self) -> bool {
        self.fraction >= self.level
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonSummary {
    pub horizon: usize,
    pub runs: usize,
    pub objective: Option<Stats>,
    pub objective_normalized: Option<Stats>,
    pub constraint: Vec<Stats>,
    pub constraint_normalized: Vec<Stats>,
    /// Mean over runs of `max(R/T, floor)`, the input to the rate fit.
    pub objective_floored: Option<f64>,
    pub constraint_floored: Vec<f64>,
    pub bounds: HorizonBounds,
    pub objective_tail: Option<TailEstimate>,
    pub constraint_tail: Vec<TailEstimate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSummary {
    pub floor: f64,
    pub objective: Option<RateFit>,
    pub constraint: Vec<RateFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub horizon: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretReport {
    pub schema_version: u32,
    pub config: Option<ExperimentConfig>,
    pub instance: InstanceDescriptor,
    pub constants: ConstantsBundle,
    pub bound_constants: BoundConstants,
    pub runs: Vec<RunRegret>,
    pub horizons: Vec<HorizonSummary>,
    /// Present when at least three horizons were run.
    pub rates: Option<RateSummary>,
    pub failures: Vec<RunFailure>,
    pub warnings: Vec<String>,
}

impl RegretReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn horizon(&self, t: usize) -> Option<&HorizonSummary> {
        self.horizons.iter().find(|h| h.horizon == t)
    }
}

/// `Σ_t F(xᵗ,ξ_t) − Σ_t F(x*,ξ_t)`; errors when the comparator columns are missing.
pub fn objective_regret(table: &TraceTable) -> Result<f64> {
    if !table.has_comparator() {
        return Err(Error::Trace {
            path: format!("run {} (seed {})", table.run_id, table.seed),
            msg: "no comparator columns; objective regret undefined".into(),
        });
    }
    Ok(table
        .rows
        .iter()
        .map(|r| r.f_sample - r.f_comparator.unwrap_or(0.0))
        .sum())
}

/// `Σ_t G_i(xᵗ,ξ_t)` for each constraint.
pub fn constraint_regret(table: &TraceTable) -> Vec<f64> {
    let mut sums = vec![0.0; table.p];
    for r in &table.rows {
        for (s, g) in sums.iter_mut().zip(&r.g_sample) {
            *s += g;
        }
    }
    sums
}

/// Least-squares fit of `log(value)` against `log(T)`.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(invalid(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some((t, v)) = points
        .iter()
        .find(|(t, v)| !(*t > 0.0 && *v > 0.0 && t.is_finite() && v.is_finite()))
    {
        return Err(invalid(format!(
            "rate fit needs positive finite points, got ({t}, {v})"
        )));
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("rate fit needs at least two distinct horizons"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    // constant data is fitted exactly by slope 0
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RateFit { slope, intercept, r2 })
}

/// Fraction of `(T, value)` samples with `value ≤ bound_fn(T)`.
pub fn empirical_tail<F: Fn(usize) -> f64>(samples: &[(usize, f64)], bound_fn: F, level: f64) -> TailEstimate {
    let within = samples.iter().filter(|(t, v)| *v <= bound_fn(*t)).count();
    let fraction = if samples.is_empty() {
        0.0
    } else {
        within as f64 / samples.len() as f64
    };
    TailEstimate {
        runs: samples.len(),
        within,
        fraction,
        level,
    }
}

pub fn horizon_bounds(
    c: &ConstantsBundle,
    k: &BoundConstants,
    p: usize,
    horizon: usize,
    eta: &[f64],
) -> Result<HorizonBounds> {
    let rt = (horizon as f64).sqrt();
    let tail = eta
        .iter()
        .map(|&e| {
            Ok(EtaBounds {
                eta: e,
                pi: pi_bound(c, p, horizon, e)?,
                beta: beta_bound(c, horizon, e)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HorizonBounds {
        window: window_len(horizon),
        kappa_o_sqrt_t: k.kappa_o * rt,
        kappa_c_sqrt_t: k.kappa_c * rt,
        omega_c: omega_c(c, p, horizon)?,
        omega_o: omega_o(c, horizon)?,
        omega_confidence: omega_confidence(horizon),
        tail,
    })
}

/// Regret report of a set of traces; a pure function of its inputs.
///
/// Runs are ordered by `(T, seed)`; the horizon of a trace is its row count.
pub fn aggregate(
    traces: &[TraceTable],
    descriptor: &InstanceDescriptor,
    constants: &ConstantsBundle,
    eta: &[f64],
) -> Result<RegretReport> {
    let p = descriptor.p;
    let k = kappa_constants(constants, p)?;
    let mut order: Vec<&TraceTable> = traces.iter().collect();
    order.sort_by_key(|t| (t.horizon(), t.seed, t.run_id));
    let mut warnings = Vec::new();
    let mut runs = Vec::with_capacity(order.len());
    for table in order {
        if table.p != p {
            return Err(invalid(format!(
                "run {} has {} constraints, instance has {p}",
                table.run_id, table.p
            )));
        }
        let horizon = table.horizon();
        if horizon == 0 {
            return Err(invalid(format!("run {} is empty", table.run_id)));
        }
        let tf = horizon as f64;
        let objective = match objective_regret(table) {
            Ok(v) => Some(v),
            Err(e) => {
                warnings.push(e.to_string());
                None
            }
        };
        let constraint = constraint_regret(table);
        runs.push(RunRegret {
            run_id: table.run_id,
            horizon,
            seed: table.seed,
            objective,
            objective_normalized: objective.map(|v| v / tf),
            constraint_normalized: constraint.iter().map(|v| v / tf).collect(),
            constraint,
            max_lambda_norm: table.rows.iter().map(|r| r.lambda_norm).fold(0.0, f64::max),
            unconverged_steps: table.rows.iter().filter(|r| r.inner_flag).count(),
        });
    }

    let mut horizons = Vec::new();
    let mut start = 0;
    while start < runs.len() {
        let horizon = runs[start].horizon;
        let end = start + runs[start..].iter().take_while(|r| r.horizon == horizon).count();
        horizons.push(summarize(&runs[start..end], constants, &k, p, eta)?);
        start = end;
    }

    let rates = (horizons.len() >= 3)
        .then(|| -> Result<RateSummary> {
            let fit = |vals: Vec<Option<f64>>| -> Result<Option<RateFit>> {
                let pts: Option<Vec<(f64, f64)>> = horizons
                    .iter()
                    .zip(vals)
                    .map(|(h, v)| v.map(|v| (h.horizon as f64, v)))
                    .collect();
                pts.map(|p| rate_fit(&p)).transpose()
            };
            let objective = fit(horizons.iter().map(|h| h.objective_floored).collect())?;
            let constraint = (0..p)
                .map(|i| fit(horizons.iter().map(|h| Some(h.constraint_floored[i])).collect()).map(Option::unwrap))
                .collect::<Result<Vec<_>>>()?;
            Ok(RateSummary {
                floor: RATE_FLOOR,
                objective,
                constraint,
            })
        })
        .transpose()?;

    Ok(RegretReport {
        schema_version: SCHEMA_VERSION,
        config: None,
        instance: descriptor.clone(),
        constants: constants.clone(),
        bound_constants: k,
        runs,
        horizons,
        rates,
        failures: Vec::new(),
        warnings,
    })
}

fn summarize(
    runs: &[RunRegret],
    c: &ConstantsBundle,
    k: &BoundConstants,
    p: usize,
    eta: &[f64],
) -> Result<HorizonSummary> {
    let horizon = runs[0].horizon;
    let bounds = horizon_bounds(c, k, p, horizon, eta)?;
    let floored_mean = |vals: Vec<f64>| vals.iter().map(|v| v.max(RATE_FLOOR)).sum::<f64>() / vals.len() as f64;

    let obj: Option<Vec<f64>> = runs.iter().map(|r| r.objective).collect();
    let obj_norm: Option<Vec<f64>> = runs.iter().map(|r| r.objective_normalized).collect();
    let column = |f: &dyn Fn(&RunRegret) -> f64| runs.iter().map(f).collect::<Vec<f64>>();

    let mut constraint = Vec::new();
    let mut constraint_normalized = Vec::new();
    let mut constraint_floored = Vec::new();
    let mut constraint_tail = Vec::new();
    for i in 0..p {
        let raw = column(&|r| r.constraint[i]);
        let norm = column(&|r| r.constraint_normalized[i]);
        constraint.extend(Stats::of(&raw));
        constraint_normalized.extend(Stats::of(&norm));
        let samples: Vec<(usize, f64)> = norm.iter().map(|v| (horizon, *v)).collect();
        constraint_tail.push(empirical_tail(&samples, |_| bounds.omega_c, bounds.omega_confidence));
        constraint_floored.push(floored_mean(norm));
    }
    let objective_tail = obj_norm.as_ref().map(|v| {
        let samples: Vec<(usize, f64)> = v.iter().map(|x| (horizon, *x)).collect();
        empirical_tail(&samples, |_| bounds.omega_o, bounds.omega_confidence)
    });

    Ok(HorizonSummary {
        horizon,
        runs: runs.len(),
        objective: obj.as_deref().and_then(Stats::of),
        objective_normalized: obj_norm.as_deref().and_then(Stats::of),
        constraint,
        constraint_normalized,
        objective_floored: obj_norm.map(floored_mean),
        constraint_floored,
        bounds,
        objective_tail,
        constraint_tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::trace::TraceRow;
    use crate::instances::make_scalar_toy;

    fn table(run_id: u64, seed: u64, f: &[(f64, f64)], g: &[f64], cmp: bool) -> TraceTable {
        let rows = f
            .iter()
            .zip(g)
            .enumerate()
            .map(|(t, (&(fs, fc), &gs))| TraceRow {
                t,
                f_sample: fs,
                f_comparator: cmp.then_some(fc),
                g_sample: vec![gs],
                g_comparator: cmp.then(|| vec![0.0]),
                lambda_norm: t as f64,
                step_norm: 0.0,
                inner_iters: 1,
                inner_flag: false,
            })
            .collect();
        TraceTable {
            run_id,
            seed,
            p: 1,
            rows,
        }
    }

    #[test]
    fn identical_comparator_gives_zero_objective() {
        let t = table(0, 0, &[(1.5, 1.5), (-0.25, -0.25), (3.0, 3.0)], &[0.0; 3], true);
        assert_eq!(objective_regret(&t).unwrap(), 0.0);
    }

    #[test]
    fn alternating_constraint_telescopes() {
        let t = table(0, 0, &[(0.0, 0.0); 4], &[1.0, -1.0, 1.0, -1.0], true);
        assert_eq!(constraint_regret(&t), vec![0.0]);
    }

    #[test]
    fn missing_comparator_keeps_constraint_regret() {
        let (toy, desc) = make_scalar_toy(0.5).unwrap();
        use crate::problem::StochasticProgram;
        let t = table(0, 0, &[(2.0, 0.0); 4], &[0.5, 0.5, 0.5, 0.5], false);
        assert!(objective_regret(&t).is_err());
        let rep = aggregate(&[t], &desc, toy.constants(), &[0.5]).unwrap();
        assert_eq!(rep.runs[0].objective, None);
        assert_eq!(rep.runs[0].constraint, vec![2.0]);
        assert_eq!(rep.runs[0].constraint_normalized, vec![0.5]);
        assert_eq!(rep.warnings.len(), 1);
        assert!(rep.horizons[0].objective.is_none());
    }

    #[test]
    fn normalized_is_raw_over_t_and_groups_by_horizon() {
        let (toy, desc) = make_scalar_toy(0.5).unwrap();
        use crate::problem::StochasticProgram;
        let traces = vec![
            table(2, 5, &[(1.0, 0.3); 7], &[0.1; 7], true),
            table(0, 1, &[(1.0, 0.7); 3], &[0.2; 3], true),
            table(1, 4, &[(1.0, 0.9); 3], &[-0.2; 3], true),
        ];
        let rep = aggregate(&traces, &desc, toy.constants(), &[0.5]).unwrap();
        assert_eq!(rep.runs.iter().map(|r| r.run_id).collect::<Vec<_>>(), vec![0, 1, 2]);
        for r in &rep.runs {
            assert_eq!(r.objective_normalized.unwrap(), r.objective.unwrap() / r.horizon as f64);
            assert_eq!(r.constraint_normalized[0], r.constraint[0] / r.horizon as f64);
        }
        assert_eq!(rep.horizons.len(), 2);
        assert_eq!(rep.horizons[0].runs, 2);
        assert!(rep.rates.is_none());
        let h = &rep.horizons[0];
        let k = kappa_constants(toy.constants(), 1).unwrap();
        assert!((h.bounds.kappa_c_sqrt_t - k.kappa_c * 3f64.sqrt()).abs() < 1e-12);
        // one run has negative violation; floored mean uses the floor there
        let expected = (0.2f64.max(RATE_FLOOR) + RATE_FLOOR) / 2.0;
        assert!((h.constraint_floored[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn rate_fit_exact_power_law() {
        let pts: Vec<(f64, f64)> = [1e2, 1e3, 1e4, 1e5]
            .iter()
            .map(|&t: &f64| (t, 3.0 * t.powf(-0.5)))
            .collect();
        let fit = rate_fit(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rate_fit_constant_and_errors() {
        let fit = rate_fit(&[(10.0, 2.0), (100.0, 2.0), (1000.0, 2.0)]).unwrap();
        assert!(fit.slope.abs() < 1e-15);
        assert_eq!(fit.r2, 1.0);
        assert!(rate_fit(&[(10.0, 2.0), (100.0, 2.0)]).is_err());
        assert!(rate_fit(&[(10.0, 2.0), (100.0, 0.0), (1000.0, 1.0)]).is_err());
        assert!(rate_fit(&[(10.0, 2.0), (10.0, 1.0), (10.0, 3.0)]).is_err());
    }

    #[test]
    fn empirical_tail_extremes() {
        let s = [(100, 0.3), (100, -2.0), (100, 7.0)];
        assert_eq!(empirical_tail(&s, |_| f64::INFINITY, 0.9).fraction, 1.0);
        assert_eq!(empirical_tail(&s, |_| f64::NEG_INFINITY, 0.9).fraction, 0.0);
        let mid = empirical_tail(&s, |_| 0.3, 0.5);
        assert_eq!((mid.within, mid.runs), (2, 3));
        assert!(mid.meets_level());
    }

    #[test]
    fn quantiles_interpolate() {
        let s = Stats::of(&[4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((s.min, s.median, s.max, s.mean), (1.0, 3.0, 5.0, 3.0));
        assert!((s.q25 - 2.0).abs() < 1e-15);
        assert!((s.q05 - 1.2).abs() < 1e-12);
        assert!(Stats::of(&[]).is_none());
    }
}
