use serde::{Deserialize, Serialize};

use crate::env::{BenchmarkPolicy, EnvironmentSpec, Estimate};
use crate::error::Result;
use crate::log::{Phase, RoundLog, SCHEMA_VERSION};
use crate::policy::Mode;
use crate::ros::SlaterEstimate;

use super::config::Bidder;

/// Per-replication aggregates, all from environment truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub replication: usize,
    pub env_seed: u64,
    pub agent_seed: u64,
    pub rounds_played: usize,
    pub cumulative_reward: f64,
    pub cumulative_realized_reward: f64,
    /// Comparator expected reward summed over the same contexts `x_1..x_T`.
    pub benchmark_value: f64,
    pub regret: f64,
    pub realized_regret: f64,
    pub spend: f64,
    /// `Σ ḡ_t(b_t)`
    pub margin_sum: f64,
    /// `[−Σ ḡ_t(b_t)]₊`
    pub violation: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub coverage_rounds: usize,
    pub covered_rounds: usize,
    pub fallback_count: usize,
    pub mesh_violation_count: usize,
    /// Main-phase rounds with `F̂(b) ∉ [z, 1 − z + 1/|eval_points|]` (RoS).
    pub band_exceptions: usize,
    /// Rounds whose logged `λ` left `[T^{-1/2}, Λ]` (RoS).
    pub dual_range_exceptions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slater: Option<SlaterEstimate>,
}

/// `F̂(b) ∈ [z, 1 − z + 1/n]` with slack for rounding.
pub fn in_acceptance_band(log: &RoundLog) -> bool {
    let tol = 1e-12;
    let jump = if log.eval_size > 0 {
        1.0 / log.eval_size as f64
    } else {
        0.0
    };
    log.f_hat_bid + tol >= log.z && log.f_hat_bid <= 1.0 - log.z + jump + tol
}

impl ReplicationSummary {
    #[allow(clippy::too_many_arguments)]
    pub fn from_logs(
        replication: usize,
        env_seed: u64,
        agent_seed: u64,
        spec: &EnvironmentSpec,
        mode: Mode,
        logs: &[RoundLog],
        benchmark: &BenchmarkPolicy,
        slater: Option<SlaterEstimate>,
    ) -> Result<Self> {
        let mut benchmark_value = 0.0;
        for t in 1..=spec.horizon() {
            let x = spec.sample_round_at(t)?.x;
            benchmark_value += benchmark.expected_reward_at(spec, &x);
        }
        let cumulative_reward: f64 = logs.iter().map(|l| l.expected_reward).sum();
        let cumulative_realized_reward: f64 = logs.iter().map(|l| l.realized_reward).sum();
        let margin_sum: f64 = logs.iter().map(|l| l.expected_margin).sum();
        let spend = logs.iter().map(|l| l.payment).sum();
        let floor = 1.0 / (spec.horizon() as f64).sqrt();
        let mut s = Self {
            replication,
            env_seed,
            agent_seed,
            rounds_played: logs.len(),
            cumulative_reward,
            cumulative_realized_reward,
            benchmark_value,
            regret: benchmark_value - cumulative_reward,
            realized_regret: benchmark_value - cumulative_realized_reward,
            spend,
            margin_sum,
            violation: (-margin_sum).max(0.0),
            delta1: 0.0,
            delta2: 1.0,
            coverage_rounds: 0,
            covered_rounds: 0,
            fallback_count: 0,
            mesh_violation_count: 0,
            band_exceptions: 0,
            dual_range_exceptions: 0,
            slater,
        };
        for l in logs {
            s.delta1 += l.epsilon;
            s.delta2 += l.epsilon * l.epsilon;
            if !l.warm_start && l.rho.is_finite() && l.rho > 0.0 {
                s.coverage_rounds += 1;
                if (l.s_hat - l.true_uplift).abs() <= l.rho {
                    s.covered_rounds += 1;
                }
            }
            s.fallback_count += usize::from(l.fallback);
            s.mesh_violation_count += usize::from(l.mesh_violation);
            if mode == Mode::Ros && l.phase == Phase::Main {
                s.band_exceptions += usize::from(!in_acceptance_band(l));
                if let (Some(lambda), Some(cap)) = (l.dual, l.lambda_max) {
                    let tol = 1e-12 * cap.max(1.0);
                    if lambda < floor - tol || lambda > cap + tol {
                        s.dual_range_exceptions += 1;
                    }
                }
            }
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub delta1: Estimate,
    pub delta2: Estimate,
    /// Pooled over replications.
    pub coverage_rate: f64,
    pub fallback_count: usize,
    pub mesh_violation_count: usize,
    pub band_exceptions: usize,
    pub dual_range_exceptions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub dual_scalar: f64,
    pub expected_reward_per_round: Estimate,
    pub expected_cost_per_round: Estimate,
    pub expected_margin_per_round: Estimate,
}

impl From<&BenchmarkPolicy> for BenchmarkSummary {
    fn from(b: &BenchmarkPolicy) -> Self {
        Self {
            dual_scalar: b.dual_scalar,
            expected_reward_per_round: b.expected_reward_per_round,
            expected_cost_per_round: b.expected_cost_per_round,
            expected_margin_per_round: b.expected_margin_per_round,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetrics {
    pub schema_version: u32,
    pub mode: Mode,
    pub bidder: Bidder,
    pub horizon: usize,
    pub dimension: usize,
    pub replications: usize,
    pub seed: u64,
    pub budget: Option<f64>,
    pub ros_target: f64,
    pub cumulative_reward: Estimate,
    pub benchmark_value: Estimate,
    /// Paired: benchmark and agent on the same contexts of each replication.
    pub regret: Estimate,
    pub realized_regret: Estimate,
    pub spend: Estimate,
    pub max_spend: f64,
    /// Mean of per-replication `[−Σḡ]₊` (RoS only).
    pub violation: Option<Estimate>,
    /// `[−mean Σḡ]₊`, never above `violation` (RoS only).
    pub jensen_shortfall: Option<f64>,
    pub diagnostics: Diagnostics,
    pub benchmark: BenchmarkSummary,
    pub per_replication: Vec<ReplicationSummary>,
}

fn estimate_of(reps: &[ReplicationSummary], f: impl Fn(&ReplicationSummary) -> f64) -> Estimate {
    let v: Vec<f64> = reps.iter().map(f).collect();
    Estimate::of(&v)
}

impl SummaryMetrics {
    #[allow(clippy::too_many_arguments)]
    pub fn aggregate(
        mode: Mode,
        bidder: Bidder,
        spec: &EnvironmentSpec,
        seed: u64,
        budget: Option<f64>,
        benchmark: &BenchmarkPolicy,
        per_replication: Vec<ReplicationSummary>,
    ) -> Self {
        let reps = &per_replication;
        let coverage_rounds: usize = reps.iter().map(|r| r.coverage_rounds).sum();
        let covered: usize = reps.iter().map(|r| r.covered_rounds).sum();
        let is_ros = mode == Mode::Ros;
        let mean_margin = estimate_of(reps, |r| r.margin_sum).mean;
        Self {
            schema_version: SCHEMA_VERSION,
            mode,
            bidder,
            horizon: spec.horizon(),
            dimension: spec.dimension(),
            replications: reps.len(),
            seed,
            budget,
            ros_target: spec.ros_target(),
            cumulative_reward: estimate_of(reps, |r| r.cumulative_reward),
            benchmark_value: estimate_of(reps, |r| r.benchmark_value),
            regret: estimate_of(reps, |r| r.regret),
            realized_regret: estimate_of(reps, |r| r.realized_regret),
            spend: estimate_of(reps, |r| r.spend),
            max_spend: reps.iter().map(|r| r.spend).fold(0.0, f64::max),
            violation: is_ros.then(|| estimate_of(reps, |r| r.violation)),
            jensen_shortfall: is_ros.then(|| (-mean_margin).max(0.0)),
            diagnostics: Diagnostics {
                delta1: estimate_of(reps, |r| r.delta1),
                delta2: estimate_of(reps, |r| r.delta2),
                coverage_rate: if coverage_rounds == 0 {
                    1.0
                } else {
                    covered as f64 / coverage_rounds as f64
                },
                fallback_count: reps.iter().map(|r| r.fallback_count).sum(),
                mesh_violation_count: reps.iter().map(|r| r.mesh_violation_count).sum(),
                band_exceptions: reps.iter().map(|r| r.band_exceptions).sum(),
                dual_range_exceptions: reps.iter().map(|r| r.dual_range_exceptions).sum(),
            },
            benchmark: benchmark.into(),
            per_replication,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary is serializable") + "\n"
    }
}
