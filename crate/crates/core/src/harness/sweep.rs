use serde::{Deserialize, Serialize};

use super::config::SimulationConfig;
use super::run;
use crate::env::Estimate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub horizon: usize,
    pub regret: Estimate,
    pub benchmark_value: Estimate,
    pub spend: Estimate,
    pub violation: Option<Estimate>,
    pub coverage_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln(mean regret)` against `ln T`.
    pub regret_slope: Option<f64>,
    pub violation_slope: Option<f64>,
}

/// OLS slope in log-log space; `None` unless every value is positive.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs `cfg` at each horizon. `budget_per_round` keeps `Z` fixed across
/// horizons; an absolute `budget` is used as given.
pub fn sweep(cfg: &SimulationConfig, horizons: &[usize]) -> Result<SweepTable> {
    if horizons.len() < 3 {
        return Err(Error::Config(vec![
            "a sweep needs at least three horizons".into()
        ]));
    }
    let mut rows = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let m = run(&cfg.with_horizon(t))?.metrics;
        log::info!("sweep T = {t}: mean regret {:.3}", m.regret.mean);
        rows.push(SweepRow {
            horizon: t,
            regret: m.regret,
            benchmark_value: m.benchmark_value,
            spend: m.spend,
            violation: m.violation,
            coverage_rate: m.diagnostics.coverage_rate,
        });
    }
    let ts: Vec<f64> = rows.iter().map(|r| r.horizon as f64).collect();
    let regret: Vec<f64> = rows.iter().map(|r| r.regret.mean).collect();
    let violation: Option<Vec<f64>> = rows.iter().map(|r| r.violation.map(|v| v.mean)).collect();
    Ok(SweepTable {
        regret_slope: loglog_slope(&ts, &regret),
        violation_slope: violation.and_then(|v| loglog_slope(&ts, &v)),
        rows,
    })
}

impl SweepTable {
    /// Plot-ready CSV, one row per horizon.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "horizon",
            "regret_mean",
            "regret_se",
            "regret_per_round",
            "benchmark_value",
            "spend_mean",
            "violation_mean",
            "violation_se",
            "violation_per_round",
            "coverage_rate",
        ])
        .expect("in-memory write");
        for r in &self.rows {
            let t = r.horizon as f64;
            let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                r.horizon.to_string(),
                r.regret.mean.to_string(),
                r.regret.std_err.to_string(),
                (r.regret.mean / t).to_string(),
                r.benchmark_value.mean.to_string(),
                r.spend.mean.to_string(),
                opt(r.violation.map(|v| v.mean)),
                opt(r.violation.map(|v| v.std_err)),
                opt(r.violation.map(|v| v.mean / t)),
                r.coverage_rate.to_string(),
            ])
            .expect("in-memory write");
        }
        w.into_inner().expect("in-memory writer")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep is serializable") + "\n"
    }
}
