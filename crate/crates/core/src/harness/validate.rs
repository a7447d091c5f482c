//! Monte Carlo checks of the oracle events the agents rely on.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Bidder, SimulationConfig};
use super::run;
use super::seeds::{derive_seed, Stream};
use crate::cdf::{
    random_split, spectral_split_check, AuctionHistory, RidgeFloor, SplitSampleEstimator,
};
use crate::env::{EnvironmentSpec, Estimate};
use crate::error::{Error, Result};
use crate::log::SCHEMA_VERSION;
use crate::uplift::ipw_pseudo_outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AtLeast,
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub direction: Direction,
    pub trials: usize,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(
        name: &str,
        value: f64,
        threshold: f64,
        direction: Direction,
        trials: usize,
        detail: String,
    ) -> Self {
        let passed = match direction {
            Direction::AtLeast => value >= threshold,
            Direction::AtMost => value <= threshold,
        };
        Self {
            name: name.to_string(),
            value,
            threshold,
            direction,
            trials,
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable") + "\n"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdfCheckSettings {
    pub horizon: usize,
    /// First round scored.
    pub t_min: usize,
    pub grid_points: usize,
    pub replications: usize,
    pub c_eps: f64,
    /// Largest violating fraction that still passes.
    pub max_violation_rate: f64,
}

impl Default for CdfCheckSettings {
    fn default() -> Self {
        Self {
            horizon: 2000,
            t_min: 200,
            grid_points: 200,
            replications: 50,
            c_eps: 0.5,
            max_violation_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationSettings {
    pub cdf: CdfCheckSettings,
    pub spectral_rounds: usize,
    pub spectral_trials: usize,
    pub min_spectral_rate: f64,
    pub min_coverage: f64,
    pub ipw_draws: usize,
    /// Largest `|mean − θ⋆ᵀx|` in standard errors.
    pub ipw_max_z: f64,
}

impl Default for ValidationSettings {
    fn default() -> Self {
        Self {
            cdf: CdfCheckSettings::default(),
            spectral_rounds: 2000,
            spectral_trials: 1000,
            min_spectral_rate: 0.99,
            min_coverage: 0.95,
            ipw_draws: 100_000,
            ipw_max_z: 3.0,
        }
    }
}

/// Raw counts of the CDF sandwich check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CdfCounts {
    pub pairs: usize,
    pub violations: usize,
    /// Pairs with `F(1 − F) = 0`, where the bound holds trivially.
    pub trivial: usize,
}

fn cdf_counts_one(spec: &EnvironmentSpec, s: &CdfCheckSettings, seed: u64) -> Result<CdfCounts> {
    let d = spec.dimension();
    let t_max = s.horizon;
    let lambda0 = RidgeFloor::PerRound.value(d, t_max);
    let est = SplitSampleEstimator::<f64>::new(d, t_max, lambda0, s.c_eps)?;
    let spec = spec.with_run(t_max, seed);
    let mut history = AuctionHistory::<f64>::new(d, lambda0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0073_706c_6974);
    let grid: Vec<f64> = (0..s.grid_points)
        .map(|i| i as f64 / (s.grid_points.max(2) - 1) as f64)
        .collect();
    let mut c = CdfCounts::default();
    for t in 1..=t_max {
        let sample = spec.sample_round_at(t)?;
        if t >= s.t_min {
            let e = est.estimate(&history, &sample.x, &mut rng);
            let eps = e.epsilon();
            for &b in &grid {
                let f = spec.true_win_prob(&sample.x, b);
                let spread = f * (1.0 - f);
                c.pairs += 1;
                if spread <= 0.0 {
                    c.trivial += 1;
                } else if (e.eval(b) - f).abs() > eps * spread.sqrt() + eps * eps {
                    c.violations += 1;
                }
            }
        }
        history.push(&sample.x, sample.m);
    }
    Ok(c)
}

/// Share of `(t ≥ t_min, b)` pairs with `|F̂ − F| > ε√(F(1−F)) + ε²`.
pub fn cdf_oracle_counts(
    spec: &EnvironmentSpec,
    s: &CdfCheckSettings,
    seed: u64,
) -> Result<CdfCounts> {
    let per: Vec<Result<CdfCounts>> = (0..s.replications)
        .into_par_iter()
        .map(|r| cdf_counts_one(spec, s, derive_seed(seed, Stream::Validation, r as u64)))
        .collect();
    let mut total = CdfCounts::default();
    for c in per {
        let c = c?;
        total.pairs += c.pairs;
        total.violations += c.violations;
        total.trivial += c.trivial;
    }
    Ok(total)
}

pub fn cdf_oracle_check(spec: &EnvironmentSpec, s: &CdfCheckSettings, seed: u64) -> Result<Check> {
    let c = cdf_oracle_counts(spec, s, seed)?;
    let rate = c.violations as f64 / c.pairs.max(1) as f64;
    Ok(Check::new(
        "cdf_oracle_bound",
        rate,
        s.max_violation_rate,
        Direction::AtMost,
        c.pairs,
        format!(
            "{} of {} pairs violate; {} trivially satisfied (F(1-F) = 0)",
            c.violations, c.pairs, c.trivial
        ),
    ))
}

/// Passes of `λ₀I + Σ_S xxᵀ ⪰ Σ_t/4` over independent histories of `t`
/// contexts with `λ₀ = 16 ln(dt)`.
pub fn spectral_passes(spec: &EnvironmentSpec, t: usize, trials: usize, seed: u64) -> usize {
    let d = spec.dimension();
    let lambda0 = RidgeFloor::PerRound.value(d, t);
    (0..trials)
        .into_par_iter()
        .filter(|&i| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Validation, i as u64));
            let mut h = AuctionHistory::<f64>::new(d, lambda0);
            for _ in 0..t {
                h.push(&spec.context_law().sample(&mut rng), 0.0);
            }
            let (train, _) = random_split(t, &mut rng);
            spectral_split_check(&h, &train)
        })
        .count()
}

pub fn spectral_check(
    spec: &EnvironmentSpec,
    t: usize,
    trials: usize,
    min_rate: f64,
    seed: u64,
) -> Check {
    let passes = spectral_passes(spec, t, trials, seed);
    Check::new(
        "spectral_split",
        passes as f64 / trials.max(1) as f64,
        min_rate,
        Direction::AtLeast,
        trials,
        format!("{passes} of {trials} splits satisfy A_S >= Sigma/4 at t = {t}"),
    )
}

/// Monte Carlo mean of the IPW pseudo-outcome at the true propensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpwMean {
    pub uplift: f64,
    pub propensity: f64,
    pub epsilon: f64,
    pub estimate: Estimate,
}

impl IpwMean {
    pub fn z_score(&self) -> f64 {
        (self.estimate.mean - self.uplift).abs() / self.estimate.std_err.max(f64::MIN_POSITIVE)
    }
}

/// Draws outcomes at a fixed `(x, b)` with `ε² < min(F, 1 − F)` so the
/// clipping in the pseudo-outcome is inactive.
pub fn ipw_mean(
    spec: &EnvironmentSpec,
    x: &[f64],
    b: f64,
    draws: usize,
    seed: u64,
) -> Result<IpwMean> {
    let f = spec.true_win_prob(x, b);
    let room = f.min(1.0 - f);
    if room <= 0.0 {
        return Err(Error::param(
            "bid",
            "true propensity must lie strictly inside (0, 1)",
        ));
    }
    let epsilon = 0.5 * room.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ys = Vec::with_capacity(draws);
    for _ in 0..draws {
        let s = spec.sample_at(x.to_vec(), &mut rng)?;
        let won = b >= s.m;
        let v = if won { s.v1 } else { s.v0 };
        ys.push(ipw_pseudo_outcome(f, epsilon, won, v));
    }
    Ok(IpwMean {
        uplift: spec.uplift(x),
        propensity: f,
        epsilon,
        estimate: Estimate::of(&ys),
    })
}

pub fn ipw_check(spec: &EnvironmentSpec, draws: usize, max_z: f64, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = spec.context_law().sample(&mut rng);
    let b = spec.competing_mean(&x).clamp(0.05, 0.95);
    let m = ipw_mean(spec, &x, b, draws, derive_seed(seed, Stream::Validation, 0))?;
    Ok(Check::new(
        "ipw_mean",
        m.z_score(),
        max_z,
        Direction::AtMost,
        draws,
        format!(
            "mean {:.5} (se {:.5}) vs uplift {:.5} at F = {:.3}",
            m.estimate.mean, m.estimate.std_err, m.uplift, m.propensity
        ),
    ))
}

/// Mean over replications of the per-seed share of post-warm-start rounds
/// with `|(θ̂ − θ⋆)ᵀx| ≤ ρ`.
pub fn coverage_check(cfg: &SimulationConfig, min_rate: f64) -> Result<Check> {
    let mut c = cfg.clone();
    c.bidder = Bidder::Agent;
    let m = run(&c)?.metrics;
    let rates: Vec<f64> = m
        .per_replication
        .iter()
        .map(|r| r.covered_rounds as f64 / r.coverage_rounds.max(1) as f64)
        .collect();
    let mean = rates.iter().sum::<f64>() / rates.len().max(1) as f64;
    let worst = rates.iter().copied().fold(1.0, f64::min);
    Ok(Check::new(
        "wls_coverage",
        mean,
        min_rate,
        Direction::AtLeast,
        rates.len(),
        format!("lowest replication {worst:.4}"),
    ))
}

/// All four checks on the configuration's environment.
pub fn validate(cfg: &SimulationConfig, settings: &ValidationSettings) -> Result<ValidationReport> {
    cfg.validate()?;
    let spec = &cfg.environment;
    let seed = derive_seed(cfg.seed, Stream::Validation, u64::MAX);
    let checks = vec![
        cdf_oracle_check(spec, &settings.cdf, seed)?,
        spectral_check(
            spec,
            settings.spectral_rounds,
            settings.spectral_trials,
            settings.min_spectral_rate,
            seed,
        ),
        coverage_check(cfg, settings.min_coverage)?,
        ipw_check(spec, settings.ipw_draws, settings.ipw_max_z, seed)?,
    ];
    Ok(ValidationReport {
        schema_version: SCHEMA_VERSION,
        checks,
    })
}
