//! Closed-form constants and bounds for the expected and high-probability
//! regret of the method, and a diagnostic for the multiplier drift.
//!
//! `log` is the natural logarithm everywhere.

use serde::Serialize;

use crate::algorithm::RunTrace;
use crate::error::{invalid, Result};
use crate::problem::ConstantsBundle;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundConstants {
    pub kappa0: f64,
    pub kappa1: f64,
    /// Always zero; kept so the five-term expansion of ψ reads naturally.
    pub kappa2: f64,
    /// `ν_g²/ε₀ − ν_g`; negative when ν_g < ε₀.
    pub kappa3: f64,
    pub kappa4: f64,
    /// `κ₀ + κ₁ + κ₃ + κ₄`
    pub kappa_star: f64,
    /// Constant of the expected constraint-violation bound `κ_c √T`.
    pub kappa_c: f64,
    /// Constant of the expected objective-regret bound `κ_o √T`.
    pub kappa_o: f64,
}

struct BaseKappas {
    k0: f64,
    k1: f64,
    k3: f64,
    k4: f64,
}

fn base_kappas(c: &ConstantsBundle) -> BaseKappas {
    let (nf, ng, e0) = (c.nu_f, c.nu_g, c.eps0);
    BaseKappas {
        k0: 2.0 * nf / e0,
        k1: c.d0 * c.d0 / e0,
        k3: ng * ng / e0 - ng,
        k4: 2.0 * ng + e0 / 2.0 + 8.0 * ng * ng / e0 * (32.0 * ng * ng / (e0 * e0)).ln(),
    }
}

pub fn kappa_constants(c: &ConstantsBundle, p: usize) -> Result<BoundConstants> {
    if p == 0 {
        return Err(invalid("bound constants need at least one constraint"));
    }
    let BaseKappas { k0, k1, k3, k4 } = base_kappas(c);
    let kappa_star = k0 + k1 + k3 + k4;
    let (kf, kg) = (c.kappa_f, c.kappa_g);
    let sp = (p as f64).sqrt();
    Ok(BoundConstants {
        kappa0: k0,
        kappa1: k1,
        kappa2: 0.0,
        kappa3: k3,
        kappa4: k4,
        kappa_star,
        kappa_c: kappa_star + 4.0 * kg * kf + 2.0 * sp * (kappa_star + c.nu_g) * kg * kg,
        kappa_o: (kf * kf + c.d0 * c.d0 + c.nu_g * c.nu_g) / 2.0,
    })
}

/// Window length `s = ⌈√T⌉` used when instantiating the drift bounds.
pub fn window_len(horizon: usize) -> usize {
    let mut s = (horizon as f64).sqrt() as usize;
    while s * s < horizon {
        s += 1;
    }
    while s > 1 && (s - 1) * (s - 1) >= horizon {
        s -= 1;
    }
    s.max(1)
}

/// Drift threshold `ϑ(σ, α, s)` above which `‖λᵗ‖` decreases in expectation over s steps.
pub fn theta_drift(c: &ConstantsBundle, sigma: f64, alpha: f64, s: usize) -> f64 {
    let (e0, ng) = (c.eps0, c.nu_g);
    let s = s as f64;
    e0 * sigma * s / 2.0
        + ng * sigma * (s - 1.0)
        + alpha * c.d0 * c.d0 / (e0 * s)
        + 2.0 * c.nu_f / e0
        + sigma * ng * ng / e0
}

/// Parameters of the drift lemma as instantiated for `Z(t) = ‖λᵗ‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftParams {
    pub theta: f64,
    pub delta_max: f64,
    pub zeta: f64,
    pub t0: usize,
}

impl DriftParams {
    /// θ = ϑ(σ, α, s), δ_max = σν_g, ζ = σε₀/2, t₀ = s. Requires `ε₀/2 <= ν_g`.
    pub fn new(c: &ConstantsBundle, sigma: f64, alpha: f64, s: usize) -> Result<Self> {
        if c.eps0 / 2.0 > c.nu_g {
            return Err(invalid(format!(
                "drift lemma needs zeta <= delta_max, i.e. eps0/2 <= nu_g (eps0 = {}, nu_g = {})",
                c.eps0, c.nu_g
            )));
        }
        if s == 0 || !(sigma > 0.0) || !(alpha > 0.0) {
            return Err(invalid("drift parameters need sigma, alpha > 0 and s >= 1"));
        }
        Ok(Self {
            theta: theta_drift(c, sigma, alpha, s),
            delta_max: sigma * c.nu_g,
            zeta: sigma * c.eps0 / 2.0,
            t0: s,
        })
    }

    /// Bound on `E[Z(t)]`.
    pub fn mean_bound(&self) -> f64 {
        drift_mean_bound(self.theta, self.delta_max, self.zeta, self.t0)
    }
}

/// `θ + t₀δ + t₀(4δ²/ζ)·log(8δ²/ζ²)`
pub fn drift_mean_bound(theta: f64, delta_max: f64, zeta: f64, t0: usize) -> f64 {
    let t0 = t0 as f64;
    let d2 = delta_max * delta_max;
    theta + t0 * delta_max + t0 * 4.0 * d2 / zeta * (8.0 * d2 / (zeta * zeta)).ln()
}

/// Level z with `Pr[Z(t) >= z] <= μ` under the drift-lemma hypotheses.
pub fn drift_tail_z(theta: f64, delta_max: f64, zeta: f64, t0: usize, mu: f64) -> Result<f64> {
    if !(theta > 0.0) || t0 == 0 {
        return Err(invalid("drift tail needs theta > 0 and t0 >= 1"));
    }
    if !(zeta > 0.0) || zeta > delta_max {
        return Err(invalid(format!(
            "drift tail needs 0 < zeta <= delta_max, got zeta = {zeta}, delta_max = {delta_max}"
        )));
    }
    check_unit_interval("mu", mu)?;
    let tail = t0 as f64 * 4.0 * delta_max * delta_max / zeta * (1.0 / mu).ln();
    Ok(drift_mean_bound(theta, delta_max, zeta, t0) + tail)
}

/// `ψ(σ, α, s) = ϑ(σ, α, s) + [ν_g + (8ν_g²/ε₀) log(32ν_g²/ε₀²)] σs`, the bound on `E‖λᵗ‖`.
pub fn psi_bound(c: &ConstantsBundle, sigma: f64, alpha: f64, s: usize) -> f64 {
    let ng = c.nu_g;
    let e0 = c.eps0;
    let bracket = ng + 8.0 * ng * ng / e0 * (32.0 * ng * ng / (e0 * e0)).ln();
    theta_drift(c, sigma, alpha, s) + bracket * sigma * s as f64
}

/// The same ψ written as `κ₀ + κ₁α/s + κ₂s + κ₃σ + κ₄σs`.
pub fn psi_bound_expanded(k: &BoundConstants, sigma: f64, alpha: f64, s: usize) -> f64 {
    let s = s as f64;
    k.kappa0 + k.kappa1 * alpha / s + k.kappa2 * s + k.kappa3 * sigma + k.kappa4 * sigma * s
}

/// `φ = ψ + (8ν_g²/ε₀) log(1/μ) σs`, the level `‖λᵗ‖` exceeds with probability at most μ.
pub fn phi_bound(c: &ConstantsBundle, sigma: f64, alpha: f64, s: usize, mu: f64) -> Result<f64> {
    check_unit_interval("mu", mu)?;
    Ok(psi_bound(c, sigma, alpha, s) + 8.0 * c.nu_g * c.nu_g / c.eps0 * (1.0 / mu).ln() * sigma * s as f64)
}

fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0, 1), got {v}")))
    }
}

fn check_horizon(horizon: usize) -> Result<f64> {
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    Ok(horizon as f64)
}

// `log_inv_eta = log(1/η)` so that the ω helpers can pass η = exp(−T^{1/4})
// without underflow.
fn pi_with_log(c: &ConstantsBundle, p: usize, t: f64, log_inv_eta: f64) -> f64 {
    let k = base_kappas(c);
    let (kf, kg, ng) = (c.kappa_f, c.kappa_g, c.nu_g);
    let sp = (p as f64).sqrt();
    let amp = 1.0 + 2.0 * sp * kg * kg;
    let rt = t.sqrt();
    k.k3 * amp
        + 2.0 * sp * ng * kg * kg
        + (amp * (k.k0 + k.k1 + k.k4) + 4.0 * kg * kf) * rt
        + 8.0 * amp * ng * ng / c.eps0 * rt * ((t + 1.0).ln() + log_inv_eta)
}

fn beta_with_log(c: &ConstantsBundle, t: f64, log_inv_eta: f64) -> f64 {
    let k = base_kappas(c);
    let (kf, ng) = (c.kappa_f, c.nu_g);
    let rt = t.sqrt();
    let log_2_eta = std::f64::consts::LN_2 + log_inv_eta;
    let bracket = (k.k0 + k.k1 + k.k4) * rt + k.k3 + 8.0 * ng * ng / c.eps0 * rt * ((2.0 * t).ln() + log_inv_eta);
    (kf * kf + ng * ng) / 2.0 * rt + c.d0 * c.d0 / 2.0 * rt + std::f64::consts::SQRT_2 * ng * log_2_eta.sqrt() * bracket
}

/// `π(T, η)`: with probability at least 1 − η, `Σ_t G_i(xᵗ, ξ_t) <= π(T, η)` for each i.
pub fn pi_bound(c: &ConstantsBundle, p: usize, horizon: usize, eta: f64) -> Result<f64> {
    if p == 0 {
        return Err(invalid("pi bound needs at least one constraint"));
    }
    check_unit_interval("eta", eta)?;
    Ok(pi_with_log(c, p, check_horizon(horizon)?, -eta.ln()))
}

/// `β(T, η)`: with probability at least 1 − η the objective regret against a
/// feasible comparator is at most `β(T, η)`.
pub fn beta_bound(c: &ConstantsBundle, horizon: usize, eta: f64) -> Result<f64> {
    check_unit_interval("eta", eta)?;
    Ok(beta_with_log(c, check_horizon(horizon)?, -eta.ln()))
}

/// `ω_c(T) = π(T, e^{−T^{1/4}}) / T`
pub fn omega_c(c: &ConstantsBundle, p: usize, horizon: usize) -> Result<f64> {
    if p == 0 {
        return Err(invalid("omega_c needs at least one constraint"));
    }
    let t = check_horizon(horizon)?;
    Ok(pi_with_log(c, p, t, t.powf(0.25)) / t)
}

/// `ω_o(T) = β(T, e^{−T^{1/4}}) / T`
pub fn omega_o(c: &ConstantsBundle, horizon: usize) -> Result<f64> {
    let t = check_horizon(horizon)?;
    Ok(beta_with_log(c, t, t.powf(0.25)) / t)
}

/// Confidence level `1 − e^{−T^{1/4}}` attached to ω_c and ω_o.
pub fn omega_confidence(horizon: usize) -> f64 {
    1.0 - (-(horizon as f64).powf(0.25)).exp()
}

/// Every bound for one horizon and confidence level, under σ = T^{-1/2}, α = T^{1/2}, s = ⌈√T⌉.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundSummary {
    pub horizon: usize,
    pub eta: f64,
    pub p: usize,
    pub constants: BoundConstants,
    pub window: usize,
    pub theta: f64,
    pub psi: f64,
    pub phi: f64,
    pub expected_constraint_bound: f64,
    pub expected_objective_bound: f64,
    pub pi: f64,
    pub beta: f64,
    pub omega_c: f64,
    pub omega_o: f64,
}

impl BoundSummary {
    pub fn compute(c: &ConstantsBundle, p: usize, horizon: usize, eta: f64) -> Result<Self> {
        let constants = kappa_constants(c, p)?;
        let t = check_horizon(horizon)?;
        let (sigma, alpha) = (1.0 / t.sqrt(), t.sqrt());
        let s = window_len(horizon);
        Ok(Self {
            horizon,
            eta,
            p,
            constants,
            window: s,
            theta: theta_drift(c, sigma, alpha, s),
            psi: psi_bound(c, sigma, alpha, s),
            phi: phi_bound(c, sigma, alpha, s, eta)?,
            expected_constraint_bound: constants.kappa_c * t.sqrt(),
            expected_objective_bound: constants.kappa_o * t.sqrt(),
            pi: pi_bound(c, p, horizon, eta)?,
            beta: beta_bound(c, horizon, eta)?,
            omega_c: omega_c(c, p, horizon)?,
            omega_o: omega_o(c, horizon)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct WindowStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl WindowStats {
    fn push(&mut self, v: f64) {
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += 1;
        self.mean += (v - self.mean) / self.count as f64;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub steps_checked: usize,
    /// Iterations t with `| ‖λ^{t+1}‖ − ‖λᵗ‖ | > σν_g`.
    pub violations: Vec<usize>,
    pub window: usize,
    pub theta: f64,
    /// s-step drifts `‖λ^{t+s}‖ − ‖λᵗ‖` started below ϑ.
    pub below_theta: WindowStats,
    /// s-step drifts started at or above ϑ.
    pub above_theta: WindowStats,
}

/// Checks the one-step multiplier bound on every step of `trace` and summarizes
/// s-step drifts with `s = ⌈√T⌉`, split by whether ‖λᵗ‖ is below ϑ(σ, α, s).
pub fn check_drift(trace: &RunTrace, sigma: f64, c: &ConstantsBundle) -> DriftReport {
    let mut norms: Vec<f64> = trace.records.iter().map(|r| r.lambda_norm).collect();
    norms.push(crate::vecops::norm(&trace.final_state.lambda));
    let cap = sigma * c.nu_g;
    let violations = norms
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[1] - w[0]).abs() > cap * (1.0 + 1e-12) + f64::EPSILON)
        .map(|(t, _)| t)
        .collect();

    let s = window_len(trace.records.len().max(1));
    let theta = theta_drift(c, sigma, trace.config.alpha, s);
    let mut below = WindowStats::default();
    let mut above = WindowStats::default();
    for t in 0..norms.len().saturating_sub(s) {
        let d = norms[t + s] - norms[t];
        if norms[t] < theta {
            below.push(d);
        } else {
            above.push(d);
        }
    }
    DriftReport {
        steps_checked: norms.len() - 1,
        violations,
        window: s,
        theta,
        below_theta: below,
        above_theta: above,
    }
}
