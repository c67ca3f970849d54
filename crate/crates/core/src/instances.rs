//! Synthetic programs with bounded noise, closed-form expectations, analytic
//! assumption constants and known optima.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::problem::{ConstantsBundle, Domain, Sample, StochasticProgram};
use crate::vecops::{dot, norm};

/// Serializable recipe for an instance; enough to rebuild it bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum InstanceSpec {
    ScalarToy {
        noise_amp: f64,
    },
    AffineQp {
        n: usize,
        p: usize,
        seed: u64,
        noise_amp: f64,
    },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<Instance> {
        match *self {
            InstanceSpec::ScalarToy { noise_amp } => Ok(Instance::ScalarToy(ScalarToy::new(noise_amp)?)),
            InstanceSpec::AffineQp { n, p, seed, noise_amp } => {
                Ok(Instance::AffineQp(AffineQp::generate(n, p, seed, noise_amp)?))
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            InstanceSpec::ScalarToy { .. } => "scalar_toy",
            InstanceSpec::AffineQp { .. } => "affine_qp",
        }
    }
}

/// Analytic optimum of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDescriptor {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub noise_amp: f64,
    pub x_star: Vec<f64>,
    pub f_star: f64,
}

/// `(x*, f*)` carried by the descriptor.
pub fn exact_solution(descriptor: &InstanceDescriptor) -> (Vec<f64>, f64) {
    (descriptor.x_star.clone(), descriptor.f_star)
}

/// `min x  s.t.  E[−x + ζ] <= 0,  x ∈ [−1, 1]`, ζ ~ U[−a, a].
///
/// Optimum x* = 0, f* = 0; feasible region [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarToy {
    noise_amp: f64,
    domain: Domain,
    constants: ConstantsBundle,
}

impl ScalarToy {
    pub const MAX_NOISE: f64 = 0.5;

    pub fn new(noise_amp: f64) -> Result<Self> {
        if !(0.0..=Self::MAX_NOISE).contains(&noise_amp) {
            return Err(invalid(format!(
                "scalar_toy noise amplitude must be in [0, 0.5], got {noise_amp}"
            )));
        }
        Ok(Self {
            noise_amp,
            domain: Domain::cube(1, -1.0, 1.0)?,
            constants: ConstantsBundle {
                d0: 2.0,
                // F(x) = x oscillates by 2 on X₀; 2.2 leaves room for the open neighbourhood
                nu_f: 2.2,
                nu_g: 1.0 + noise_amp,
                kappa_f: 1.0,
                kappa_g: 1.0,
                eps0: 1.0,
                slater_point: vec![1.0],
            },
        })
    }

    pub fn with_constants(mut self, constants: ConstantsBundle) -> Self {
        self.constants = constants;
        self
    }

    pub fn descriptor(&self) -> InstanceDescriptor {
        InstanceDescriptor {
            name: "scalar_toy".into(),
            n: 1,
            p: 1,
            noise_amp: self.noise_amp,
            x_star: vec![0.0],
            f_star: 0.0,
        }
    }

    /// Projection onto Φ = [0, 1].
    pub fn project_feasible(&self, y: &[f64]) -> Vec<f64> {
        vec![y[0].clamp(0.0, 1.0)]
    }
}

impl StochasticProgram for ScalarToy {
    fn dim(&self) -> usize {
        1
    }
    fn num_constraints(&self) -> usize {
        1
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Sample {
        let a = self.noise_amp;
        Sample(vec![rng.gen_range(-a..=a)])
    }
    fn eval_f(&self, x: &[f64], _xi: &Sample) -> f64 {
        x[0]
    }
    fn eval_g(&self, x: &[f64], xi: &Sample) -> Vec<f64> {
        vec![-x[0] + xi.0[0]]
    }
    fn subgrad_f(&self, _x: &[f64], _xi: &Sample) -> Vec<f64> {
        vec![1.0]
    }
    fn subgrad_g(&self, _x: &[f64], _xi: &Sample) -> Vec<Vec<f64>> {
        vec![vec![-1.0]]
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn constants(&self) -> &ConstantsBundle {
        &self.constants
    }
    fn true_f(&self, x: &[f64]) -> Option<f64> {
        Some(x[0])
    }
    fn true_g(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(vec![-x[0]])
    }
}

pub fn make_scalar_toy(noise_amp: f64) -> Result<(ScalarToy, InstanceDescriptor)> {
    let toy = ScalarToy::new(noise_amp)?;
    let d = toy.descriptor();
    Ok((toy, d))
}

/// `F(x, ξ) = ½‖x − (μ + ξ_obj)‖²`, `G_i(x, ξ) = a_iᵀx − b_i + ξ_cons,i` on the
/// box `[−R, R]^n`, with uniform noise on `[−a, a]`.
///
/// The geometry is such that only constraint 1 is active at the optimum, so
/// `x* = μ − a₁(a₁ᵀμ − b₁)/‖a₁‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineQp {
    mu: Vec<f64>,
    /// Constraint normals a_i.
    normals: Vec<Vec<f64>>,
    offsets: Vec<f64>,
    noise_amp: f64,
    radius: f64,
    domain: Domain,
    constants: ConstantsBundle,
    x_star: Vec<f64>,
}

impl AffineQp {
    pub const BOX_RADIUS: f64 = 2.0;
    const MAX_ATTEMPTS: usize = 100;
    const MARGIN: f64 = 0.05;

    /// Builds an instance from explicit data. Fails unless constraint 1 is the
    /// only active constraint at the projected point and that point lies
    /// strictly inside the box; `b` must be positive so that x̂ = 0 is a Slater point.
    pub fn from_parts(
        mu: Vec<f64>,
        normals: Vec<Vec<f64>>,
        offsets: Vec<f64>,
        radius: f64,
        noise_amp: f64,
    ) -> Result<Self> {
        let n = mu.len();
        let p = normals.len();
        if n == 0 || p == 0 || offsets.len() != p || normals.iter().any(|a| a.len() != n) {
            return Err(invalid("affine_qp needs n >= 1, p >= 1 and consistent dimensions"));
        }
        if !(noise_amp >= 0.0) || !(radius > 0.0) {
            return Err(invalid("affine_qp needs noise_amp >= 0 and radius > 0"));
        }
        if offsets.iter().any(|&b| !(b > 0.0)) || normals.iter().any(|a| norm(a) == 0.0) {
            return Err(invalid("affine_qp needs positive offsets and nonzero normals"));
        }
        let a1 = &normals[0];
        let excess = dot(a1, &mu) - offsets[0];
        if excess <= 0.0 {
            return Err(invalid("constraint 1 is not active at the optimum"));
        }
        let scale = excess / dot(a1, a1);
        let x_star: Vec<f64> = mu.iter().zip(a1).map(|(m, a)| m - scale * a).collect();
        if x_star.iter().any(|v| v.abs() >= radius) {
            return Err(invalid("optimum is not strictly inside the box"));
        }
        if normals[1..]
            .iter()
            .zip(&offsets[1..])
            .any(|(a, b)| dot(a, &x_star) >= *b)
        {
            return Err(invalid(
                "a constraint other than the first is active or violated at the optimum",
            ));
        }

        let domain = Domain::cube(n, -radius, radius)?;
        let kappa_f = mu
            .iter()
            .map(|m| (radius + m.abs() + noise_amp).powi(2))
            .sum::<f64>()
            .sqrt();
        let nu_g = normals
            .iter()
            .zip(&offsets)
            .map(|(a, b)| (radius * a.iter().map(|v| v.abs()).sum::<f64>() + b.abs() + noise_amp).powi(2))
            .sum::<f64>()
            .sqrt();
        let constants = ConstantsBundle {
            d0: domain.diameter(),
            nu_f: 0.5 * kappa_f * kappa_f,
            nu_g,
            kappa_f,
            kappa_g: normals.iter().map(|a| norm(a)).fold(0.0, f64::max),
            eps0: offsets.iter().copied().fold(f64::INFINITY, f64::min),
            slater_point: vec![0.0; n],
        };
        Ok(Self {
            mu,
            normals,
            offsets,
            noise_amp,
            radius,
            domain,
            constants,
            x_star,
        })
    }

    /// Draws (μ, a_i, b_i) from `seed` with a_i unit normals, b_i ~ U[0.5, 1] and
    /// μ ~ U[−1.5, 1.5]^n, redrawing until the single-active-constraint geometry
    /// holds with a margin.
    pub fn generate(n: usize, p: usize, seed: u64, noise_amp: f64) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(invalid("affine_qp needs n >= 1 and p >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = Self::BOX_RADIUS;
        for _ in 0..Self::MAX_ATTEMPTS {
            let normals: Vec<Vec<f64>> = (0..p)
                .map(|_| {
                    let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                    let l = norm(&v).max(f64::MIN_POSITIVE);
                    v.into_iter().map(|c| c / l).collect()
                })
                .collect();
            let offsets: Vec<f64> = (0..p).map(|_| rng.gen_range(0.5..1.0)).collect();
            let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();

            let excess = dot(&normals[0], &mu) - offsets[0];
            if excess < Self::MARGIN {
                continue;
            }
            let x_star: Vec<f64> = mu.iter().zip(&normals[0]).map(|(m, a)| m - excess * a).collect();
            let inside = x_star.iter().all(|v| v.abs() < r - Self::MARGIN);
            let others_slack = normals[1..]
                .iter()
                .zip(&offsets[1..])
                .all(|(a, b)| dot(a, &x_star) - b < -Self::MARGIN);
            if inside && others_slack {
                return Self::from_parts(mu, normals, offsets, r, noise_amp);
            }
        }
        Err(Error::GenerationFailed(Self::MAX_ATTEMPTS))
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn normals(&self) -> &[Vec<f64>] {
        &self.normals
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn descriptor(&self) -> InstanceDescriptor {
        let n = self.mu.len() as f64;
        let gap: f64 = self.x_star.iter().zip(&self.mu).map(|(x, m)| (x - m).powi(2)).sum();
        InstanceDescriptor {
            name: "affine_qp".into(),
            n: self.mu.len(),
            p: self.normals.len(),
            noise_amp: self.noise_amp,
            x_star: self.x_star.clone(),
            // E[ξ_j²] = a²/3 per coordinate
            f_star: 0.5 * gap + n * self.noise_amp * self.noise_amp / 6.0,
        }
    }

    /// Euclidean projection onto Φ = box ∩ {a_iᵀx <= b_i}, by Dykstra's
    /// alternating projections run to machine precision.
    pub fn project_feasible(&self, y: &[f64]) -> Vec<f64> {
        let p = self.normals.len();
        let mut x = y.to_vec();
        let mut incr = vec![vec![0.0; x.len()]; p + 1];
        for _ in 0..100_000 {
            let prev = x.clone();
            for (k, inc) in incr.iter_mut().enumerate() {
                let w: Vec<f64> = x.iter().zip(inc.iter()).map(|(a, b)| a + b).collect();
                let next = if k < p {
                    let a = &self.normals[k];
                    let over = dot(a, &w) - self.offsets[k];
                    if over > 0.0 {
                        let s = over / dot(a, a);
                        w.iter().zip(a).map(|(wi, ai)| wi - s * ai).collect()
                    } else {
                        w.clone()
                    }
                } else {
                    self.domain.project(&w)
                };
                for ((i, wi), ni) in inc.iter_mut().zip(&w).zip(&next) {
                    *i = wi - ni;
                }
                x = next;
            }
            let moved = x.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let worst = self
                .normals
                .iter()
                .zip(&self.offsets)
                .map(|(a, b)| dot(a, &x) - b)
                .fold(f64::NEG_INFINITY, f64::max);
            if moved <= 1e-15 && worst <= 1e-12 {
                break;
            }
        }
        x
    }
}

impl StochasticProgram for AffineQp {
    fn dim(&self) -> usize {
        self.mu.len()
    }
    fn num_constraints(&self) -> usize {
        self.normals.len()
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Sample {
        let a = self.noise_amp;
        Sample(
            (0..self.mu.len() + self.normals.len())
                .map(|_| rng.gen_range(-a..=a))
                .collect(),
        )
    }
    fn eval_f(&self, x: &[f64], xi: &Sample) -> f64 {
        0.5 * x
            .iter()
            .zip(&self.mu)
            .zip(&xi.0)
            .map(|((x, m), e)| (x - m - e).powi(2))
            .sum::<f64>()
    }
    fn eval_g(&self, x: &[f64], xi: &Sample) -> Vec<f64> {
        let n = self.mu.len();
        self.normals
            .iter()
            .zip(&self.offsets)
            .zip(&xi.0[n..])
            .map(|((a, b), e)| dot(a, x) - b + e)
            .collect()
    }
    fn subgrad_f(&self, x: &[f64], xi: &Sample) -> Vec<f64> {
        x.iter().zip(&self.mu).zip(&xi.0).map(|((x, m), e)| x - m - e).collect()
    }
    fn subgrad_g(&self, _x: &[f64], _xi: &Sample) -> Vec<Vec<f64>> {
        self.normals.clone()
    }
    fn domain(&self) -> &Domain {
        &self.domain
    }
    fn constants(&self) -> &ConstantsBundle {
        &self.constants
    }
    fn true_f(&self, x: &[f64]) -> Option<f64> {
        let n = self.mu.len() as f64;
        let gap: f64 = x.iter().zip(&self.mu).map(|(x, m)| (x - m).powi(2)).sum();
        Some(0.5 * gap + n * self.noise_amp * self.noise_amp / 6.0)
    }
    fn true_g(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(
            self.normals
                .iter()
                .zip(&self.offsets)
                .map(|(a, b)| dot(a, x) - b)
                .collect(),
        )
    }
}

pub fn make_affine_qp(n: usize, p: usize, seed: u64, noise_amp: f64) -> Result<(AffineQp, InstanceDescriptor)> {
    let qp = AffineQp::generate(n, p, seed, noise_amp)?;
    let d = qp.descriptor();
    Ok((qp, d))
}

/// Any registered instance.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    ScalarToy(ScalarToy),
    AffineQp(AffineQp),
}

impl Instance {
    fn inner(&self) -> &dyn StochasticProgram {
        match self {
            Instance::ScalarToy(s) => s,
            Instance::AffineQp(q) => q,
        }
    }

    pub fn descriptor(&self) -> InstanceDescriptor {
        match self {
            Instance::ScalarToy(s) => s.descriptor(),
            Instance::AffineQp(q) => q.descriptor(),
        }
    }

    pub fn project_feasible(&self, y: &[f64]) -> Vec<f64> {
        match self {
            Instance::ScalarToy(s) => s.project_feasible(y),
            Instance::AffineQp(q) => q.project_feasible(y),
        }
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.domain().contains(x, tol) && self.true_g(x).is_some_and(|g| g.iter().all(|&v| v <= tol))
    }
}

impl StochasticProgram for Instance {
    fn dim(&self) -> usize {
        self.inner().dim()
    }
    fn num_constraints(&self) -> usize {
        self.inner().num_constraints()
    }
    fn sample(&self, rng: &mut dyn RngCore) -> Sample {
        self.inner().sample(rng)
    }
    fn eval_f(&self, x: &[f64], xi: &Sample) -> f64 {
        self.inner().eval_f(x, xi)
    }
    fn eval_g(&self, x: &[f64], xi: &Sample) -> Vec<f64> {
        self.inner().eval_g(x, xi)
    }
    fn subgrad_f(&self, x: &[f64], xi: &Sample) -> Vec<f64> {
        self.inner().subgrad_f(x, xi)
    }
    fn subgrad_g(&self, x: &[f64], xi: &Sample) -> Vec<Vec<f64>> {
        self.inner().subgrad_g(x, xi)
    }
    fn domain(&self) -> &Domain {
        self.inner().domain()
    }
    fn constants(&self) -> &ConstantsBundle {
        self.inner().constants()
    }
    fn true_f(&self, x: &[f64]) -> Option<f64> {
        self.inner().true_f(x)
    }
    fn true_g(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.inner().true_g(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{finite_diff_check, validate_constants};

    fn worked_qp(b1: f64) -> AffineQp {
        AffineQp::from_parts(vec![2.0, 0.0], vec![vec![1.0, 0.0]], vec![b1], 2.0, 0.0).unwrap()
    }

    #[test]
    fn scalar_toy_definition() {
        let (toy, d) = make_scalar_toy(0.0).unwrap();
        assert_eq!(toy.true_g(&[0.3]).unwrap(), vec![-0.3]);
        assert_eq!(toy.true_g(&toy.constants().slater_point).unwrap(), vec![-1.0]);
        assert_eq!((d.x_star, d.f_star), (vec![0.0], 0.0));
        assert!(make_scalar_toy(0.6).is_err());
        assert!(make_scalar_toy(-0.1).is_err());
        assert_eq!(toy.constants().nu_g, 1.0);
        assert_eq!(make_scalar_toy(0.5).unwrap().0.constants().nu_g, 1.5);
    }

    #[test]
    fn scalar_toy_noise_is_bounded() {
        let toy = ScalarToy::new(0.5).unwrap();
        let r = validate_constants(&toy, 10_000, 3).unwrap();
        assert!(r.passed(), "{:?}", r.flags);
        assert!(r.max_g_norm <= 1.5);
        assert!(r.max_g_norm > 1.4);
    }

    #[test]
    fn scalar_toy_forced_violation_flagged() {
        let toy = ScalarToy::new(0.2).unwrap();
        let mut c = toy.constants().clone();
        c.nu_g = 0.01;
        let toy = toy.with_constants(c);
        let r = validate_constants(&toy, 1000, 1).unwrap();
        assert!(r.flags.iter().any(|f| f.starts_with("nu_g")));
        let single = validate_constants(&toy, 1, 1).unwrap();
        assert_eq!(single.n_samples, 1);
        assert_eq!(single.slater_g_stderr, vec![0.0]);
    }

    #[test]
    fn affine_worked_example() {
        let qp = worked_qp(1.0);
        let d = qp.descriptor();
        assert_eq!(d.x_star, vec![1.0, 0.0]);
        assert_eq!(d.f_star, 0.5);
        assert_eq!(qp.constants().eps0, 1.0);
        let moved = worked_qp(1.1).descriptor();
        assert!((moved.x_star[0] - 1.1).abs() < 1e-15 && moved.x_star[1] == 0.0);
    }

    #[test]
    fn generated_instances_have_single_active_constraint() {
        for (n, p) in [(1, 1), (2, 1), (2, 3), (5, 4), (10, 2)] {
            for seed in 0..5 {
                let (qp, d) = make_affine_qp(n, p, seed, 0.1).unwrap();
                let g = qp.true_g(&d.x_star).unwrap();
                assert!(g[0].abs() <= 1e-12, "n={n} p={p} seed={seed}: {}", g[0]);
                assert!(g[1..].iter().all(|&v| v < 0.0));
                assert!(qp.domain().contains(&d.x_star, 0.0));
                let slater = qp.true_g(&qp.constants().slater_point).unwrap();
                assert!(slater.iter().all(|&v| v <= -qp.constants().eps0));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(
            AffineQp::generate(3, 2, 9, 0.2).unwrap(),
            AffineQp::generate(3, 2, 9, 0.2).unwrap()
        );
        assert_ne!(
            AffineQp::generate(3, 2, 9, 0.2).unwrap(),
            AffineQp::generate(3, 2, 10, 0.2).unwrap()
        );
    }

    #[test]
    fn from_parts_rejects_bad_geometry() {
        // constraint 1 inactive
        assert!(AffineQp::from_parts(vec![0.0, 0.0], vec![vec![1.0, 0.0]], vec![1.0], 2.0, 0.0).is_err());
        // optimum outside the box
        assert!(AffineQp::from_parts(vec![2.0, 3.0], vec![vec![1.0, 0.0]], vec![1.0], 2.0, 0.0).is_err());
        // second constraint active
        assert!(AffineQp::from_parts(
            vec![2.0, 0.0],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![1.0, 1.0],
            2.0,
            0.0
        )
        .is_err());
    }

    #[test]
    fn affine_finite_differences() {
        let (qp, _) = make_affine_qp(2, 1, 4, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let x = qp.domain().sample_uniform(&mut rng);
            let xi = qp.sample(&mut rng);
            assert!(finite_diff_check(&qp, &x, &xi, 1e-5) <= 1e-6);
        }
    }

    #[test]
    fn feasible_projection_lands_in_phi() {
        let (qp, d) = make_affine_qp(2, 3, 2, 0.0).unwrap();
        let inst = Instance::AffineQp(qp.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let y: Vec<f64> = (0..2).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let x = qp.project_feasible(&y);
            assert!(inst.is_feasible(&x, 1e-9), "{x:?}");
        }
        // μ projects onto x*
        let x = qp.project_feasible(qp.mu());
        assert!(x.iter().zip(&d.x_star).all(|(a, b)| (a - b).abs() < 1e-9));
    }
}
