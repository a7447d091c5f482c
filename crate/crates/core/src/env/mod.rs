//! Synthetic auction environment: the only holder of the hidden truth
//! `(θ⋆, φ⋆, Ψ)`.
//!
//! Agents never see an [`EnvironmentSpec`]; they receive contexts and the
//! one-sided feedback built by [`Feedback::observe`].

mod benchmark;
mod context;
mod noise;

pub use benchmark::{BenchmarkMode, BenchmarkPolicy, Estimate, BENCHMARK_GRID, BISECTION_TOL};
pub use context::ContextLaw;
pub use noise::{NoiseFamily, NoiseModel};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_ros_target() -> f64 {
    1.0
}

/// Serialized form of an environment; validated into [`EnvironmentSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentConfig {
    pub theta_star: Vec<f64>,
    pub phi_star: Vec<f64>,
    pub context_law: ContextLaw,
    pub noise: NoiseConfig,
    pub horizon: usize,
    #[serde(default = "default_ros_target")]
    pub ros_target: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub family: NoiseFamily,
    pub scale: f64,
}

/// Ground-truth auction environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvironmentConfig", into = "EnvironmentConfig")]
pub struct EnvironmentSpec {
    theta_star: Vec<f64>,
    phi_star: Vec<f64>,
    context_law: ContextLaw,
    noise: NoiseModel,
    horizon: usize,
    ros_target: f64,
    seed: u64,
}

impl TryFrom<EnvironmentConfig> for EnvironmentSpec {
    type Error = Error;

    fn try_from(c: EnvironmentConfig) -> Result<Self> {
        let noise = NoiseModel::new(c.noise.family, c.noise.scale)?;
        EnvironmentSpec::new(
            c.theta_star,
            c.phi_star,
            c.context_law,
            noise,
            c.horizon,
            c.ros_target,
            c.seed,
        )
    }
}

impl From<EnvironmentSpec> for EnvironmentConfig {
    fn from(s: EnvironmentSpec) -> Self {
        EnvironmentConfig {
            theta_star: s.theta_star,
            phi_star: s.phi_star,
            context_law: s.context_law,
            noise: NoiseConfig {
                family: s.noise.family,
                scale: s.noise.scale,
            },
            horizon: s.horizon,
            ros_target: s.ros_target,
            seed: s.seed,
        }
    }
}

/// One auction draw. `v1`/`v0` are the potential outcomes; only one of them
/// ever reaches the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSample {
    pub x: Vec<f64>,
    pub m: f64,
    pub v1: f64,
    pub v0: f64,
}

/// What the bidder learns after submitting `bid`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    pub m: f64,
    /// `v1` on a win (`bid ≥ m`), `v0` otherwise.
    pub v_observed: f64,
}

impl Feedback {
    pub fn observe(sample: &RoundSample, bid: f64) -> Self {
        let won = bid >= sample.m;
        Feedback {
            m: sample.m,
            v_observed: if won { sample.v1 } else { sample.v0 },
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl EnvironmentSpec {
    pub fn new(
        theta_star: Vec<f64>,
        phi_star: Vec<f64>,
        context_law: ContextLaw,
        noise: NoiseModel,
        horizon: usize,
        ros_target: f64,
        seed: u64,
    ) -> Result<Self> {
        context_law.validate()?;
        let d = context_law.dimension();
        if theta_star.len() != d || phi_star.len() != d {
            return Err(Error::Environment(format!(
                "theta_star/phi_star must have dimension {d}"
            )));
        }
        if norm(&theta_star) > 1.0 + 1e-12 {
            return Err(Error::Environment("‖theta_star‖ must be at most 1".into()));
        }
        if norm(&phi_star) > 1.0 + 1e-12 {
            return Err(Error::Environment("‖phi_star‖ must be at most 1".into()));
        }
        if !context_law.uplift_in_unit_interval(&theta_star) {
            return Err(Error::Environment(
                "theta_star·x leaves [0, 1] on the context support".into(),
            ));
        }
        if horizon == 0 {
            return Err(Error::Environment("horizon must be positive".into()));
        }
        if !(ros_target >= 0.0 && ros_target.is_finite()) {
            return Err(Error::Environment(
                "ros_target must be a nonnegative real".into(),
            ));
        }
        Ok(Self {
            theta_star,
            phi_star,
            context_law,
            noise,
            horizon,
            ros_target,
            seed,
        })
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn phi_star(&self) -> &[f64] {
        &self.phi_star
    }

    pub fn context_law(&self) -> &ContextLaw {
        &self.context_law
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn ros_target(&self) -> f64 {
        self.ros_target
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dimension(&self) -> usize {
        self.theta_star.len()
    }

    /// Same environment with another horizon and seed.
    pub fn with_run(&self, horizon: usize, seed: u64) -> Self {
        let mut s = self.clone();
        s.horizon = horizon.max(1);
        s.seed = seed;
        s
    }

    /// Same environment with another noise law.
    pub fn with_noise(&self, noise: NoiseModel) -> Self {
        let mut s = self.clone();
        s.noise = noise;
        s
    }

    /// Density floor on the RoS evaluation domain `{b − φ⋆ᵀx : b ∈ [0,1], ‖x‖ ≤ 1}`.
    pub fn ros_density_floor(&self) -> f64 {
        let r = norm(&self.phi_star);
        let n = 4000;
        (0..=n)
            .map(|i| {
                self.noise
                    .density(-r + (1.0 + 2.0 * r) * i as f64 / n as f64)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Random stream for round `t` (1-based): depends only on `(seed, t)`.
    pub fn round_rng(&self, t: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(t as u64);
        rng
    }

    pub fn uplift(&self, x: &[f64]) -> f64 {
        dot(&self.theta_star, x)
    }

    pub fn competing_mean(&self, x: &[f64]) -> f64 {
        dot(&self.phi_star, x)
    }

    /// Draws `(x, m, v1, v0)`. Potential outcomes share a uniform latent
    /// `U`: `v0 = 1[U < p0]`, `v1 = 1[U < p0 + θ⋆ᵀx]` with `p0 = (1 − θ⋆ᵀx)/2`.
    pub fn sample_round<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<RoundSample> {
        let x = self.context_law.sample(rng);
        self.sample_at(x, rng)
    }

    /// Draws the round outcomes at a given context.
    pub fn sample_at<R: Rng + ?Sized>(&self, x: Vec<f64>, rng: &mut R) -> Result<RoundSample> {
        let uplift = self.uplift(&x);
        if !(-1e-12..=1.0 + 1e-12).contains(&uplift) {
            return Err(Error::Environment(format!(
                "theta_star·x = {uplift} outside [0, 1]"
            )));
        }
        let uplift = uplift.clamp(0.0, 1.0);
        let m = self.competing_mean(&x) + self.noise.sample(rng);
        let p0 = (1.0 - uplift) / 2.0;
        let latent: f64 = rng.random();
        let v0 = if latent < p0 { 1.0 } else { 0.0 };
        let v1 = if latent < p0 + uplift { 1.0 } else { 0.0 };
        Ok(RoundSample { x, m, v1, v0 })
    }

    /// Round `t` of the episode stream.
    pub fn sample_round_at(&self, t: usize) -> Result<RoundSample> {
        self.sample_round(&mut self.round_rng(t))
    }

    /// All `T` rounds of an episode, each from its own positioned stream.
    pub fn sample_episode(&self) -> Result<Vec<RoundSample>> {
        (1..=self.horizon)
            .map(|t| self.sample_round_at(t))
            .collect()
    }

    /// `F(b | x) = Ψ(b − φ⋆ᵀx)`
    pub fn true_win_prob(&self, x: &[f64], b: f64) -> f64 {
        self.noise.cdf(b - self.competing_mean(x))
    }

    /// `r̄ = F(b|x)(θ⋆ᵀx − b)`
    pub fn expected_reward(&self, x: &[f64], b: f64) -> f64 {
        self.true_win_prob(x, b) * (self.uplift(x) - b)
    }

    /// `c̄ = b F(b|x)`
    pub fn expected_cost(&self, x: &[f64], b: f64) -> f64 {
        b * self.true_win_prob(x, b)
    }

    /// `ḡ = r̄ − ρ_ros c̄ = F(b|x)(θ⋆ᵀx − (1 + ρ_ros) b)`
    pub fn expected_margin(&self, x: &[f64], b: f64) -> f64 {
        self.true_win_prob(x, b) * (self.uplift(x) - (1.0 + self.ros_target) * b)
    }

    /// Monte Carlo Slater margin: average over contexts of the per-context
    /// grid maximum of `ḡ`.
    pub fn slater_margin<R: Rng + ?Sized>(
        &self,
        grid_size: usize,
        mc_samples: usize,
        rng: &mut R,
    ) -> f64 {
        let grid = uniform_grid(grid_size.max(2));
        let mut total = 0.0;
        for _ in 0..mc_samples {
            let x = self.context_law.sample(rng);
            let best = grid
                .iter()
                .map(|&b| self.expected_margin(&x, b))
                .fold(f64::NEG_INFINITY, f64::max);
            total += best;
        }
        total / mc_samples.max(1) as f64
    }

    /// `λ_min(E[xxᵀ])` diagnostic.
    pub fn context_min_eigenvalue(&self, samples: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x6b78_5f6d_696e);
        self.context_law.min_eigenvalue(samples, &mut rng)
    }
}

/// `n` evenly spaced points on `[0, 1]` including both ends.
pub(crate) fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}
