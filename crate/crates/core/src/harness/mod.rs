//! Episode orchestration, paired metrics, sweeps, validation and artifacts.

mod config;
mod metrics;
mod output;
pub mod presets;
mod seeds;
mod sweep;
pub mod validate;

pub use config::{BenchmarkSettings, Bidder, OutputSettings, Precision, SimulationConfig};
pub use metrics::{
    in_acceptance_band, BenchmarkSummary, Diagnostics, ReplicationSummary, SummaryMetrics,
};
pub use output::{
    parse_round_logs, read_round_logs, round_log_header, round_logs_to_csv, OutputSet,
};
pub use seeds::{derive_seed, splitmix64, Stream};
pub use sweep::{loglog_slope, sweep, SweepRow, SweepTable};

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::budget::{run_budget_episode, settle_round};
use crate::env::{BenchmarkPolicy, EnvironmentSpec};
use crate::error::Result;
use crate::log::{Phase, RoundLog};
use crate::params::AgentParams;
use crate::policy::Mode;
use crate::ros::{run_ros_episode, SlaterEstimate};

/// Logs and summary of one replication.
#[derive(Debug, Clone)]
pub struct Replication {
    pub logs: Vec<RoundLog>,
    pub summary: ReplicationSummary,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub replications: Vec<Replication>,
    pub metrics: SummaryMetrics,
}

/// Comparator for the configured mode, fitted on its own seed stream.
pub fn fit_benchmark(cfg: &SimulationConfig) -> Result<BenchmarkPolicy> {
    let seed = derive_seed(cfg.seed, Stream::Benchmark, 0);
    let spec = cfg.environment.with_run(cfg.horizon(), seed);
    BenchmarkPolicy::fit(
        &spec,
        cfg.benchmark_mode(),
        cfg.benchmark.grid_size,
        cfg.benchmark.mc_samples,
    )
}

/// Runs every replication and aggregates the paired metrics.
pub fn run(cfg: &SimulationConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let params = cfg.agent_params()?;
    let benchmark = fit_benchmark(cfg)?;
    log::info!(
        "{} {:?}: {} replications at T = {}",
        cfg.mode,
        cfg.bidder,
        cfg.replications,
        cfg.horizon()
    );
    let one = |r: usize| run_replication(cfg, &params, &benchmark, r);
    let results: Vec<Result<Replication>> = if cfg.parallel {
        (0..cfg.replications).into_par_iter().map(one).collect()
    } else {
        (0..cfg.replications).map(one).collect()
    };
    let replications = results.into_iter().collect::<Result<Vec<_>>>()?;
    let metrics = SummaryMetrics::aggregate(
        cfg.mode,
        cfg.bidder,
        &cfg.environment,
        cfg.seed,
        cfg.total_budget(),
        &benchmark,
        replications.iter().map(|r| r.summary.clone()).collect(),
    );
    Ok(RunOutput {
        replications,
        metrics,
    })
}

/// Replication `index`: derives its seeds, runs the bidder, scores it.
pub fn run_replication(
    cfg: &SimulationConfig,
    params: &AgentParams,
    benchmark: &BenchmarkPolicy,
    index: usize,
) -> Result<Replication> {
    let env_seed = derive_seed(cfg.seed, Stream::Environment, index as u64);
    let agent_seed = derive_seed(cfg.seed, Stream::Agent, index as u64);
    let spec = cfg.environment.with_run(cfg.horizon(), env_seed);
    let record_x = cfg.output.record_contexts;
    let budget = cfg.total_budget();
    let (logs, slater): (Vec<RoundLog>, Option<SlaterEstimate>) = match cfg.bidder {
        Bidder::Agent => match (cfg.mode, cfg.precision) {
            (Mode::Ros, Precision::F64) => {
                run_ros_episode::<f64>(&spec, params, agent_seed, record_x)?
            }
            (Mode::Ros, Precision::F32) => {
                run_ros_episode::<f32>(&spec, params, agent_seed, record_x)?
            }
            (_, Precision::F64) => (
                run_budget_episode::<f64>(&spec, params, budget, agent_seed, record_x)?,
                None,
            ),
            (_, Precision::F32) => (
                run_budget_episode::<f32>(&spec, params, budget, agent_seed, record_x)?,
                None,
            ),
        },
        Bidder::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(agent_seed);
            (
                fixed_rule_episode(&spec, budget, record_x, |_| rng.random::<f64>())?,
                None,
            )
        }
        Bidder::Benchmark => (
            fixed_rule_episode(&spec, budget, record_x, |x| benchmark.bid(&spec, x))?,
            None,
        ),
    };
    let summary = ReplicationSummary::from_logs(
        index, env_seed, agent_seed, &spec, cfg.mode, &logs, benchmark, slater,
    )?;
    Ok(Replication { logs, summary })
}

/// Episode of a non-learning bidder under the same stopping rule as the
/// Budget agent.
fn fixed_rule_episode(
    spec: &EnvironmentSpec,
    budget: Option<f64>,
    record_x: bool,
    mut rule: impl FnMut(&[f64]) -> f64,
) -> Result<Vec<RoundLog>> {
    let mut logs = Vec::with_capacity(spec.horizon());
    let mut spend = 0.0;
    for t in 1..=spec.horizon() {
        if budget.is_some_and(|b| spend > b - 1.0) {
            break;
        }
        let sample = spec.sample_round_at(t)?;
        let mut log = RoundLog::new(t, Phase::Main);
        log.bid = rule(&sample.x).clamp(0.0, 1.0);
        log.warm_start = true;
        if log.bid >= sample.m {
            spend += log.bid;
        }
        settle_round(&mut log, spec, &sample, spend, record_x);
        logs.push(log);
    }
    Ok(logs)
}

/// Round-log CSVs and `summary.json` under `dir`, written all-or-nothing.
pub fn emit_outputs(
    out: &RunOutput,
    dir: &std::path::Path,
    round_logs: bool,
) -> Result<Vec<PathBuf>> {
    let mut set = OutputSet::new();
    if round_logs {
        for r in &out.replications {
            let name = format!("rounds_r{:03}.csv", r.summary.replication);
            set.add(dir.join(name), round_logs_to_csv(&r.logs));
        }
    }
    set.add(dir.join("summary.json"), out.metrics.to_json().into_bytes());
    set.commit()
}
