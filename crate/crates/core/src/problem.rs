//! Stochastic program abstraction, feasible-set projections and oracle checks.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::vecops::{all_finite, dist, norm};

/// `[v]_+`, the Euclidean projection onto the nonnegative orthant.
pub fn project_nonneg(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&c| c.max(0.0)).collect()
}

/// Componentwise clamp onto `[lo, hi]`.
pub fn project_box(y: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    if y.len() != lo.len() || y.len() != hi.len() {
        return Err(invalid("box bounds must match the point dimension"));
    }
    if let Some(i) = lo.iter().zip(hi).position(|(l, h)| l > h) {
        return Err(invalid(format!("box lower bound exceeds upper bound at index {i}")));
    }
    Ok(y.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| v.clamp(l, h))
        .collect())
}

/// Projection onto the closed ball `{x : ‖x − center‖ <= radius}`. `radius` must be positive.
pub fn project_ball(y: &[f64], center: &[f64], radius: f64) -> Vec<f64> {
    debug_assert!(radius > 0.0);
    let d = dist(y, center);
    if d <= radius {
        return y.to_vec();
    }
    let scale = radius / d;
    y.iter().zip(center).map(|(&v, &c)| c + scale * (v - c)).collect()
}

/// The simple closed convex set X₀ over which each subproblem is solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl Domain {
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(invalid("box bounds must be nonempty and of equal length"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(invalid("box lower bound exceeds upper bound"));
        }
        Ok(Domain::Box { lo, hi })
    }

    pub fn new_ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !(radius > 0.0) {
            return Err(invalid("ball needs a nonempty center and positive radius"));
        }
        Ok(Domain::Ball { center, radius })
    }

    /// Uniform box `[lo, hi]^n`.
    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new_box(vec![lo; n], vec![hi; n])
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lo, .. } => lo.len(),
            Domain::Ball { center, .. } => center.len(),
        }
    }

    pub fn project(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Domain::Box { lo, hi } => y
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&v, (&l, &h))| v.clamp(l, h))
                .collect(),
            Domain::Ball { center, radius } => project_ball(y, center, *radius),
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            Domain::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&v, (&l, &h))| v >= l - tol && v <= h + tol),
            Domain::Ball { center, radius } => dist(x, center) <= radius + tol,
        }
    }

    /// Exact diameter of the set.
    pub fn diameter(&self) -> f64 {
        match self {
            Domain::Box { lo, hi } => dist(lo, hi),
            Domain::Ball { radius, .. } => 2.0 * radius,
        }
    }

    /// Draws a point uniformly distributed over the set.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Domain::Box { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(&l, &h)| if l < h { rng.gen_range(l..=h) } else { l })
                .collect(),
            Domain::Ball { center, radius } => {
                let n = center.len();
                let dir: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let len = norm(&dir).max(f64::MIN_POSITIVE);
                let r = radius * rng.gen::<f64>().powf(1.0 / n as f64);
                center.iter().zip(&dir).map(|(&c, &d)| c + r * d / len).collect()
            }
        }
    }
}

/// Constants of the standing assumptions: diameter, oscillation and norm
/// bounds on the sampled functions and subgradients, and a Slater point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsBundle {
    /// Diameter bound of X₀.
    pub d0: f64,
    /// Bound on `F(x', ξ) − F(x'', ξ)`.
    pub nu_f: f64,
    /// Bound on `‖G(x, ξ)‖`.
    pub nu_g: f64,
    /// Bound on `‖v₀(x, ξ)‖`.
    pub kappa_f: f64,
    /// Bound on each `‖v_i(x, ξ)‖`.
    pub kappa_g: f64,
    /// Slater margin: `g_i(x̂) <= −eps0`.
    pub eps0: f64,
    pub slater_point: Vec<f64>,
}

impl ConstantsBundle {
    /// Checks positivity of all scalars and that the Slater point lies in `domain`.
    pub fn validate(&self, domain: &Domain) -> Result<()> {
        let named = [
            ("d0", self.d0),
            ("nu_f", self.nu_f),
            ("nu_g", self.nu_g),
            ("kappa_f", self.kappa_f),
            ("kappa_g", self.kappa_g),
            ("eps0", self.eps0),
        ];
        for (name, v) in named {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("constant {name} must be finite and positive, got {v}")));
            }
        }
        if self.slater_point.len() != domain.dim() {
            return Err(invalid("slater point has the wrong dimension"));
        }
        let projected = domain.project(&self.slater_point);
        if dist(&projected, &self.slater_point) > 1e-12 {
            return Err(invalid("slater point is not in X0"));
        }
        Ok(())
    }
}

/// One realization ξ of the random data.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample(pub Vec<f64>);

/// Counter-based sample stream keyed by `(master_seed, run_id, t)`.
///
/// The generator for iteration `t` is positioned independently of every other
/// iteration, so two algorithms reading the same stream see the same ξ_t no
/// matter how many draws each of them makes per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleStream {
    pub master_seed: u64,
    pub run_id: u64,
}

impl SampleStream {
    /// 32-bit words reserved per iteration.
    const WORDS_PER_STEP: u32 = 16;

    pub fn new(master_seed: u64, run_id: u64) -> Self {
        Self { master_seed, run_id }
    }

    pub fn rng_at(&self, t: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.run_id);
        rng.set_word_pos(u128::from(t) << Self::WORDS_PER_STEP);
        rng
    }

    /// ξ_t for `program`.
    pub fn draw<P: StochasticProgram + ?Sized>(&self, program: &P, t: u64) -> Sample {
        program.sample(&mut self.rng_at(t))
    }
}

/// A convex stochastic program with expectation constraints.
///
/// Implementations are immutable; every oracle is a pure function of `(x, ξ)`.
pub trait StochasticProgram: Send + Sync {
    /// Decision dimension n.
    fn dim(&self) -> usize;

    /// Number of expectation constraints p.
    fn num_constraints(&self) -> usize;

    fn sample(&self, rng: &mut dyn RngCore) -> Sample;

    fn eval_f(&self, x: &[f64], xi: &Sample) -> f64;

    /// `G(x, ξ)`, exactly `p` components.
    fn eval_g(&self, x: &[f64], xi: &Sample) -> Vec<f64>;

    /// `v₀(x, ξ) ∈ ∂F(x, ξ)`.
    fn subgrad_f(&self, x: &[f64], xi: &Sample) -> Vec<f64>;

    /// Columns `v_1, …, v_p` of `V(x, ξ)`, each of length n.
    fn subgrad_g(&self, x: &[f64], xi: &Sample) -> Vec<Vec<f64>>;

    fn domain(&self) -> &Domain;

    fn constants(&self) -> &ConstantsBundle;

    fn project_x0(&self, y: &[f64]) -> Vec<f64> {
        self.domain().project(y)
    }

    /// Closed-form `f(x) = E[F(x, ξ)]` when known.
    fn true_f(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// Closed-form `g(x) = E[G(x, ξ)]` when known.
    fn true_g(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

/// Monte Carlo spot check of the assumption constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_samples: usize,
    pub max_g_norm: f64,
    pub max_subgrad_f_norm: f64,
    pub max_subgrad_g_norm: f64,
    /// Largest observed `F(x', ξ) − F(x'', ξ)` over sampled pairs sharing ξ.
    pub max_f_oscillation: f64,
    /// Sample mean of `G_i(x̂, ξ)` per constraint.
    pub slater_g_mean: Vec<f64>,
    /// Standard error of each entry of `slater_g_mean` (0 with one sample).
    pub slater_g_stderr: Vec<f64>,
    pub flags: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.flags.is_empty()
    }
}

/// Draws `n_samples` pairs `(x, ξ)` with x uniform on X₀ and reports the
/// empirical maxima of the bounded quantities along with the sample mean of
/// `G(x̂, ξ)`. Bound violations are flagged in the report, not returned as errors.
pub fn validate_constants<P: StochasticProgram + ?Sized>(
    program: &P,
    n_samples: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if n_samples == 0 {
        return Err(invalid("n_samples must be at least 1"));
    }
    let c = program.constants();
    let p = program.num_constraints();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let non_finite = |what| Error::NonFinite { iteration: 0, what };

    let mut max_g: f64 = 0.0;
    let mut max_vf: f64 = 0.0;
    let mut max_vg: f64 = 0.0;
    let mut max_osc: f64 = 0.0;
    let mut sum = vec![0.0; p];
    let mut sum_sq = vec![0.0; p];

    for _ in 0..n_samples {
        let x = program.domain().sample_uniform(&mut rng);
        let x2 = program.domain().sample_uniform(&mut rng);
        let xi = program.sample(&mut rng);

        let g = program.eval_g(&x, &xi);
        if g.len() != p {
            return Err(invalid(format!("eval_g returned {} components, expected {p}", g.len())));
        }
        let vf = program.subgrad_f(&x, &xi);
        let vg = program.subgrad_g(&x, &xi);
        let f1 = program.eval_f(&x, &xi);
        let f2 = program.eval_f(&x2, &xi);
        if !all_finite(&g) || !all_finite(&vf) || !f1.is_finite() || !f2.is_finite() {
            return Err(non_finite("oracle output"));
        }
        max_g = max_g.max(norm(&g));
        max_vf = max_vf.max(norm(&vf));
        for col in &vg {
            max_vg = max_vg.max(norm(col));
        }
        max_osc = max_osc.max((f1 - f2).abs());

        let gs = program.eval_g(&c.slater_point, &xi);
        if !all_finite(&gs) {
            return Err(non_finite("G at slater point"));
        }
        for i in 0..p {
            sum[i] += gs[i];
            sum_sq[i] += gs[i] * gs[i];
        }
    }

    let n = n_samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let stderr: Vec<f64> = if n_samples > 1 {
        sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| ((sq / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt())
            .collect()
    } else {
        vec![0.0; p]
    };

    let mut flags = Vec::new();
    if max_g > c.nu_g {
        flags.push(format!("nu_g violated: observed ‖G‖ = {max_g} > {}", c.nu_g));
    }
    if max_vf > c.kappa_f {
        flags.push(format!("kappa_f violated: observed ‖v0‖ = {max_vf} > {}", c.kappa_f));
    }
    if max_vg > c.kappa_g {
        flags.push(format!("kappa_g violated: observed ‖v_i‖ = {max_vg} > {}", c.kappa_g));
    }
    for i in 0..p {
        if mean[i] > -c.eps0 + 3.0 * stderr[i] {
            flags.push(format!(
                "slater margin violated for constraint {}: mean G = {} > -eps0 + 3 se",
                i + 1,
                mean[i]
            ));
        }
    }

    Ok(ValidationReport {
        n_samples,
        max_g_norm: max_g,
        max_subgrad_f_norm: max_vf,
        max_subgrad_g_norm: max_vg,
        max_f_oscillation: max_osc,
        slater_g_mean: mean,
        slater_g_stderr: stderr,
        flags,
    })
}

/// Largest sup-norm gap between central finite differences and the reported
/// subgradients, over F and every G_i. Tiny `h` puts this in the cancellation
/// regime and yields large values; that is caller misuse, not an error.
pub fn finite_diff_check<P: StochasticProgram + ?Sized>(program: &P, x: &[f64], xi: &Sample, h: f64) -> f64 {
    let n = program.dim();
    let p = program.num_constraints();
    let vf = program.subgrad_f(x, xi);
    let vg = program.subgrad_g(x, xi);
    let mut worst: f64 = 0.0;
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        let df = (program.eval_f(&xp, xi) - program.eval_f(&xm, xi)) / (2.0 * h);
        worst = worst.max((df - vf[j]).abs());
        let gp = program.eval_g(&xp, xi);
        let gm = program.eval_g(&xm, xi);
        for i in 0..p {
            let dg = (gp[i] - gm[i]) / (2.0 * h);
            worst = worst.max((dg - vg[i][j]).abs());
        }
        xp[j] = x[j];
        xm[j] = x[j];
    }
    worst
}
