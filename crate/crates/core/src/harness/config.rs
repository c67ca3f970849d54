use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::algorithm::{AlgoConfig, ParamRule, DEFAULT_INNER_MAX_ITER, DEFAULT_INNER_TOL};
use crate::baseline::{BaselineConfig, StepRule};
use crate::error::{Error, Result};
use crate::instances::InstanceSpec;

pub const DEFAULT_ETA: [f64; 3] = [0.01, 0.1, 0.5];

/// Seeds given either as a count (`0..n`) or an explicit list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Count(u64),
    List(Vec<u64>),
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::Count(n) => (0..*n).collect(),
            SeedSpec::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Pmmsopt,
    ProjectedSa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedRule {
    InvSqrtHorizon,
    SqrtHorizon,
}

/// σ or α in a config file: a number or a horizon rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSetting {
    Value(f64),
    Rule(NamedRule),
}

impl From<ParamSetting> for ParamRule {
    fn from(s: ParamSetting) -> Self {
        match s {
            ParamSetting::Value(v) => ParamRule::Fixed(v),
            ParamSetting::Rule(NamedRule::InvSqrtHorizon) => ParamRule::InvSqrtHorizon,
            ParamSetting::Rule(NamedRule::SqrtHorizon) => ParamRule::SqrtHorizon,
        }
    }
}

fn default_sigma() -> ParamSetting {
    ParamSetting::Rule(NamedRule::InvSqrtHorizon)
}
fn default_alpha() -> ParamSetting {
    ParamSetting::Rule(NamedRule::SqrtHorizon)
}
fn default_inner_tol() -> f64 {
    DEFAULT_INNER_TOL
}
fn default_inner_max_iter() -> usize {
    DEFAULT_INNER_MAX_ITER
}
fn default_eta() -> Vec<f64> {
    DEFAULT_ETA.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub name: AlgorithmKind,
    #[serde(default = "default_sigma")]
    pub sigma: ParamSetting,
    #[serde(default = "default_alpha")]
    pub alpha: ParamSetting,
    #[serde(default = "default_inner_tol")]
    pub inner_tol: f64,
    #[serde(default = "default_inner_max_iter")]
    pub inner_max_iter: usize,
    /// Constant step of the projected baseline; `D₀/(κ_f √T)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

/// One experiment: an instance, an algorithm, horizons and seeds.
///
/// ```toml
/// master_seed = 7
/// horizons = [100, 1000, 10000]
/// seeds = 20
/// eta = [0.1, 0.5]
///
/// [instance]
/// name = "scalar_toy"
/// noise_amp = 0.5
///
/// [algorithm]
/// name = "pmmsopt"
/// sigma = "inv_sqrt_horizon"
/// alpha = "sqrt_horizon"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub horizons: Vec<usize>,
    pub seeds: SeedSpec,
    #[serde(default = "default_eta")]
    pub eta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub instance: InstanceSpec,
    pub algorithm: AlgorithmSpec,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.horizons.is_empty() || self.horizons[0] == 0 {
            return bad("horizons must be nonempty and positive".into());
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return bad("horizons must be strictly increasing".into());
        }
        let seeds = self.seeds.seeds();
        if seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        let mut seen = HashSet::new();
        if let Some(dup) = seeds.iter().find(|s| !seen.insert(**s)) {
            return bad(format!("duplicate seed {dup}"));
        }
        if let Some(e) = self.eta.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return bad(format!("eta values must lie in (0, 1), got {e}"));
        }
        let a = &self.algorithm;
        if !(a.inner_tol > 0.0) || a.inner_max_iter == 0 {
            return bad("inner solver needs a positive tolerance and budget".into());
        }
        if let Some(s) = a.step {
            if !(s > 0.0) {
                return bad(format!("step must be positive, got {s}"));
            }
        }
        let instance = self.instance.build().map_err(|e| Error::Config(e.to_string()))?;
        use crate::problem::StochasticProgram;
        for &t in &self.horizons {
            if a.name == AlgorithmKind::Pmmsopt {
                self.algo_config(t, 0, None)
                    .resolve(instance.num_constraints(), instance.constants().kappa_g)
                    .map_err(|e| Error::Config(format!("horizon {t}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.seeds()
    }

    /// Run configuration for `(horizon, seed)`; the seed selects the stream under `master_seed`.
    pub fn algo_config(&self, horizon: usize, seed: u64, comparator: Option<Vec<f64>>) -> AlgoConfig {
        let a = &self.algorithm;
        AlgoConfig {
            comparator,
            ..AlgoConfig::new(horizon, a.sigma.into(), a.alpha.into())
                .with_seed(self.master_seed, seed)
                .with_inner(a.inner_tol, a.inner_max_iter)
        }
    }

    pub fn baseline_config(&self, horizon: usize, seed: u64, comparator: Option<Vec<f64>>) -> BaselineConfig {
        let mut cfg = BaselineConfig::new(horizon).with_seed(self.master_seed, seed);
        if let Some(s) = self.algorithm.step {
            cfg = cfg.with_step(StepRule::Constant(s));
        }
        cfg.comparator = comparator;
        cfg
    }
}
