use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use lte_core::harness::validate::{validate, ValidationSettings};
use lte_core::harness::{emit_outputs, presets, run, sweep, OutputSet, SimulationConfig};
use lte_core::Error;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "lte-sim",
    version,
    about = "Simulate learning-to-bid agents in first-price auctions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all replications of one configuration and write logs plus a summary.
    Simulate(Common),
    /// Run the configuration at several horizons and fit the regret slope.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated horizons (at least three).
        #[arg(long, value_delimiter = ',', default_values_t = [1000, 4000, 16000])]
        horizons: Vec<usize>,
    },
    /// Monte Carlo checks of the CDF, spectral, coverage and IPW events.
    Validate {
        #[command(flatten)]
        common: Common,
        /// JSON file with validation settings.
        #[arg(long)]
        settings: Option<PathBuf>,
    },
    /// Time repeated runs of a configuration.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// List the shipped presets, or print one.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a shipped configuration.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// unc, bgt or ros.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    budget_per_round: Option<f64>,
    /// Any config key, e.g. `--set agent.c_eps=0.05` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> anyhow::Result<SimulationConfig> {
        let text = match (&self.config, &self.preset) {
            (Some(path), _) => std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?,
            (None, Some(name)) => presets::source(name)
                .with_context(|| format!("unknown preset `{name}`"))?
                .to_string(),
            (None, None) => bail!("pass --config or --preset"),
        };
        let mut o = Vec::new();
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        if let Some(d) = &self.out_dir {
            o.push(format!("output.dir={}", json!(d)));
        }
        if let Some(m) = &self.mode {
            o.push(format!("mode={m}"));
            if m != "bgt" {
                o.push("budget=null".into());
                o.push("budget_per_round=null".into());
            }
        }
        if let Some(t) = self.horizon {
            o.push(format!("environment.horizon={t}"));
        }
        if let Some(r) = self.replications {
            o.push(format!("replications={r}"));
        }
        if let Some(b) = self.budget {
            o.push(format!("budget={b}"));
            o.push("budget_per_round=null".into());
        }
        if let Some(b) = self.budget_per_round {
            o.push(format!("budget_per_round={b}"));
            o.push("budget=null".into());
        }
        o.extend(self.overrides.iter().cloned());
        Ok(SimulationConfig::from_json_with_overrides(&text, &o)?)
    }
}

fn out_dir(cfg: &SimulationConfig) -> anyhow::Result<&Path> {
    cfg.output
        .dir
        .as_deref()
        .context("no output directory: pass --out-dir or set output.dir")
}

/// Exit status plus the machine-readable failure list.
enum Failure {
    Config(Vec<String>),
    Checks(serde_json::Value),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<Error>() {
            Ok(Error::Config(p)) => Failure::Config(p),
            Ok(e @ (Error::Json(_) | Error::Environment(_) | Error::InvalidParameter { .. })) => {
                Failure::Config(vec![e.to_string()])
            }
            Ok(other) => Failure::Other(other.into()),
            Err(e) => Failure::Other(e),
        }
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Simulate(common) => {
            let cfg = common.load()?;
            let dir = out_dir(&cfg)?.to_path_buf();
            let out = run(&cfg).map_err(anyhow::Error::from)?;
            let files =
                emit_outputs(&out, &dir, cfg.output.round_logs).map_err(anyhow::Error::from)?;
            let m = &out.metrics;
            println!(
                "{} {} T={} reps={} regret={:.3} (se {:.3}) spend={:.3}{}",
                m.mode,
                serde_json::to_string(&m.bidder)
                    .unwrap_or_default()
                    .trim_matches('"'),
                m.horizon,
                m.replications,
                m.regret.mean,
                m.regret.std_err,
                m.spend.mean,
                m.violation
                    .map(|v| format!(" violation={:.3}", v.mean))
                    .unwrap_or_default()
            );
            println!("wrote {} files to {}", files.len(), dir.display());
        }
        Command::Sweep { common, horizons } => {
            let cfg = common.load()?;
            let dir = out_dir(&cfg)?.to_path_buf();
            let table = sweep(&cfg, &horizons).map_err(anyhow::Error::from)?;
            let mut set = OutputSet::new();
            set.add(dir.join("sweep.csv"), table.to_csv());
            set.add(dir.join("sweep.json"), table.to_json().into_bytes());
            set.commit().map_err(anyhow::Error::from)?;
            for r in &table.rows {
                println!(
                    "T={:>6} regret={:>10.3} (se {:.3})",
                    r.horizon, r.regret.mean, r.regret.std_err
                );
            }
            match table.regret_slope {
                Some(s) => println!("log-log regret slope {s:.4}"),
                None => println!("log-log regret slope undefined (nonpositive regret)"),
            }
        }
        Command::Validate { common, settings } => {
            let cfg = common.load()?;
            let settings: ValidationSettings = match settings {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text).context("parsing validation settings")?
                }
                None => ValidationSettings::default(),
            };
            let report = validate(&cfg, &settings).map_err(anyhow::Error::from)?;
            if let Some(dir) = cfg.output.dir.as_deref() {
                let mut set = OutputSet::new();
                set.add(dir.join("validation.json"), report.to_json().into_bytes());
                set.commit().map_err(anyhow::Error::from)?;
            }
            for c in &report.checks {
                println!(
                    "{} {:<18} {:.5} (threshold {}) {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.value,
                    c.threshold,
                    c.detail
                );
            }
            if !report.passed() {
                return Err(Failure::Checks(json!(report.failures())));
            }
        }
        Command::Bench { common, repeats } => {
            let cfg = common.load()?;
            let mut secs = Vec::with_capacity(repeats);
            for _ in 0..repeats.max(1) {
                let start = Instant::now();
                run(&cfg).map_err(anyhow::Error::from)?;
                secs.push(start.elapsed().as_secs_f64());
            }
            let best = secs.iter().copied().fold(f64::INFINITY, f64::min);
            let rounds = (cfg.horizon() * cfg.replications) as f64;
            println!(
                "{}",
                json!({
                    "mode": cfg.mode,
                    "horizon": cfg.horizon(),
                    "replications": cfg.replications,
                    "seconds": secs,
                    "best_rounds_per_second": rounds / best,
                })
            );
        }
        Command::Presets { name: None } => {
            for n in presets::names() {
                println!("{n}");
            }
        }
        Command::Presets { name: Some(n) } => {
            let text = presets::source(&n).with_context(|| format!("unknown preset `{n}`"))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(problems)) => {
            eprintln!(
                "{}",
                json!({ "error": "invalid config", "failures": problems })
            );
            ExitCode::from(2)
        }
        Err(Failure::Checks(failures)) => {
            eprintln!(
                "{}",
                json!({ "error": "validation failed", "failures": failures })
            );
            ExitCode::from(1)
        }
        Err(Failure::Other(e)) => {
            eprintln!("{}", json!({ "error": format!("{e:#}"), "failures": [] }));
            ExitCode::from(1)
        }
    }
}
