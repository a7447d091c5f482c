use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::env::{BenchmarkMode, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::params::{AgentConfig, AgentParams};
use crate::policy::Mode;

/// Who places the bids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bidder {
    #[default]
    Agent,
    /// Uniform bids on `[0, 1]`; the linear-regret control.
    Uniform,
    /// Plays the comparator itself (regret is zero by construction).
    Benchmark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSettings {
    pub grid_size: usize,
    pub mc_samples: usize,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self {
            grid_size: 1024,
            mc_samples: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    /// Directory for round logs and the summary; nothing is written when unset.
    pub dir: Option<PathBuf>,
    /// Write one round-log CSV per replication.
    pub round_logs: bool,
    /// Keep the context column in round logs.
    pub record_contexts: bool,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: None,
            round_logs: true,
            record_contexts: false,
        }
    }
}

/// One file fully determines a run. `environment.seed` is replaced per
/// replication by a seed derived from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub environment: EnvironmentSpec,
    pub mode: Mode,
    #[serde(default)]
    pub bidder: Bidder,
    /// Total budget `B` (Bgt only); exclusive with `budget_per_round`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<f64>,
    /// `B/T`, so the same file works across horizons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_per_round: Option<f64>,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default = "one")]
    pub replications: usize,
    /// Master seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub benchmark: BenchmarkSettings,
    #[serde(default)]
    pub output: OutputSettings,
    /// Fan replications out over the rayon pool.
    #[serde(default)]
    pub parallel: bool,
}

fn one() -> usize {
    1
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses after applying `key.path=value` overrides to the JSON tree.
    /// Values parse as JSON when possible and fall back to strings.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut tree: Value = serde_json::from_str(text)?;
        for o in overrides {
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(vec![format!("override `{o}` is not key=value")]))?;
            let value =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut tree, path, value)?;
        }
        let cfg: Self = serde_json::from_value(tree)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable") + "\n"
    }

    pub fn horizon(&self) -> usize {
        self.environment.horizon()
    }

    /// Copy with a different horizon, keeping everything else.
    pub fn with_horizon(&self, horizon: usize) -> Self {
        let mut c = self.clone();
        c.environment = self.environment.with_run(horizon, self.environment.seed());
        c
    }

    /// `B` for the configured horizon, `None` outside Bgt mode.
    pub fn total_budget(&self) -> Option<f64> {
        match self.mode {
            Mode::Bgt => self
                .budget
                .or_else(|| self.budget_per_round.map(|r| r * self.horizon() as f64)),
            _ => None,
        }
    }

    pub fn benchmark_mode(&self) -> BenchmarkMode {
        match self.mode {
            Mode::Unc => BenchmarkMode::Unc,
            Mode::Bgt => BenchmarkMode::Bgt {
                budget_per_round: self.total_budget().unwrap_or(0.0) / self.horizon() as f64,
            },
            Mode::Ros => BenchmarkMode::Ros,
        }
    }

    pub fn agent_params(&self) -> Result<AgentParams> {
        let spec = &self.environment;
        self.agent
            .resolve(spec.horizon(), spec.dimension(), spec.noise().density_bound)
    }

    /// Every problem with the configuration, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.agent.problems();
        if self.replications == 0 {
            out.push("replications must be at least 1".into());
        }
        match (self.mode, self.budget, self.budget_per_round) {
            (Mode::Bgt, None, None) => out.push("mode bgt needs budget or budget_per_round".into()),
            (Mode::Bgt, Some(_), Some(_)) => {
                out.push("set only one of budget and budget_per_round".into())
            }
            (Mode::Bgt, b, r) => {
                let v = b.or(r).unwrap_or(0.0);
                if !(v > 0.0 && v.is_finite()) {
                    out.push(format!("budget must be positive and finite, got {v}"));
                }
                if let Some(r) = r {
                    if r > 1.0 {
                        out.push(format!("budget_per_round must be at most 1, got {r}"));
                    }
                }
            }
            (_, None, None) => {}
            (m, _, _) => out.push(format!("budget is only meaningful in mode bgt, not {m}")),
        }
        if self.benchmark.grid_size < 100 {
            out.push("benchmark.grid_size must be at least 100".into());
        }
        if self.benchmark.mc_samples < 2 {
            out.push("benchmark.mc_samples must be at least 2".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

fn set_path(tree: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = tree;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            Error::Config(vec![format!("`{path}`: `{key}` is not inside an object")])
        })?;
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        node = obj
            .entry((*key).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one key")
}
