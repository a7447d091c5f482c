//! Tunable agent constants and their horizon-dependent defaults.

use serde::{Deserialize, Serialize};

use crate::cdf::RidgeFloor;
use crate::error::{Error, Result};

/// How the branch bonus constant scales.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusScale {
    /// `C_br = base · (1 + γ_t)`
    #[default]
    ShadowPrice,
    /// `C_br = base · (1 + Z)`, fixed over the run.
    Pacing,
}

/// User-facing constants; `None` means "use the default for this run".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub lambda0: Option<f64>,
    pub ridge_floor: RidgeFloor,
    pub c_eps: f64,
    pub c_beta: f64,
    pub c_br: f64,
    pub bonus_scale: BonusScale,
    pub c_ros: f64,
    pub c_frak: f64,
    pub c_r: f64,
    pub lambda_max: f64,
    /// Ridge for the burn-in nuisance fits of the Slater estimate.
    pub slater_ridge: f64,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub grid_k: Option<usize>,
    /// Overrides the density bound `L` reported by the noise model.
    pub density_bound: Option<f64>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            lambda0: None,
            ridge_floor: RidgeFloor::PerRound,
            c_eps: 0.5,
            c_beta: 0.5,
            c_br: 1.0,
            bonus_scale: BonusScale::ShadowPrice,
            c_ros: 1.0,
            c_frak: 0.5,
            c_r: 3.0,
            lambda_max: 100.0,
            slater_ridge: 1.0,
            alpha: None,
            eta: None,
            grid_k: None,
            density_bound: None,
        }
    }
}

/// Constants resolved for a concrete `(T, d, L)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub horizon: usize,
    pub dim: usize,
    pub lambda0: f64,
    pub ridge_floor: RidgeFloor,
    pub c_eps: f64,
    pub c_beta: f64,
    pub c_br: f64,
    pub bonus_scale: BonusScale,
    pub c_ros: f64,
    pub c_frak: f64,
    pub c_r: f64,
    pub lambda_max: f64,
    pub slater_ridge: f64,
    pub alpha: f64,
    pub eta: f64,
    pub grid_k: usize,
    pub density_bound: f64,
}

impl AgentConfig {
    /// Problems with the configured constants, one message each.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("agent.{name} must be positive and finite, got {v}"));
            }
        };
        positive("c_eps", self.c_eps);
        positive("c_beta", self.c_beta);
        positive("c_br", self.c_br);
        positive("c_ros", self.c_ros);
        positive("c_frak", self.c_frak);
        positive("c_r", self.c_r);
        positive("lambda_max", self.lambda_max);
        positive("slater_ridge", self.slater_ridge);
        for (name, v) in [
            ("lambda0", self.lambda0),
            ("alpha", self.alpha),
            ("eta", self.eta),
            ("density_bound", self.density_bound),
        ] {
            if let Some(v) = v {
                positive(name, v);
            }
        }
        if self.grid_k == Some(0) {
            out.push("agent.grid_k must be at least 1".into());
        }
        out
    }

    pub fn resolve(&self, horizon: usize, dim: usize, density_bound: f64) -> Result<AgentParams> {
        let problems = self.problems();
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        if horizon == 0 || dim == 0 {
            return Err(Error::param("horizon/dimension", "must be positive"));
        }
        let t = horizon as f64;
        let d = dim as f64;
        let lambda0 = self
            .lambda0
            .unwrap_or_else(|| self.ridge_floor.value(dim, horizon));
        let delta2_bar = d * (1.0 + t.ln());
        Ok(AgentParams {
            horizon,
            dim,
            lambda0,
            ridge_floor: self.ridge_floor,
            c_eps: self.c_eps,
            c_beta: self.c_beta,
            c_br: self.c_br,
            bonus_scale: self.bonus_scale,
            c_ros: self.c_ros,
            c_frak: self.c_frak,
            c_r: self.c_r,
            lambda_max: self.lambda_max,
            slater_ridge: self.slater_ridge,
            alpha: self.alpha.unwrap_or_else(|| (t / (d * delta2_bar)).sqrt()),
            eta: self.eta.unwrap_or_else(|| 1.0 / t.sqrt()),
            grid_k: self.grid_k.unwrap_or_else(|| t.sqrt().ceil() as usize),
            density_bound: self.density_bound.unwrap_or(density_bound),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_horizon() {
        let p = AgentConfig::default().resolve(400, 4, 1.0).unwrap();
        assert_eq!(p.grid_k, 20);
        assert!((p.eta - 0.05).abs() < 1e-15);
        assert!((p.lambda0 - 16.0 * 1600f64.ln()).abs() < 1e-12);
        let expected_alpha = (400.0 / (4.0 * 4.0 * (1.0 + 400f64.ln()))).sqrt();
        assert!((p.alpha - expected_alpha).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_constants() {
        let cfg = AgentConfig {
            c_eps: 0.0,
            alpha: Some(-1.0),
            ..AgentConfig::default()
        };
        match cfg.resolve(100, 2, 1.0) {
            Err(Error::Config(p)) => assert_eq!(p.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<AgentConfig>(r#"{"c_eps": 0.1, "typo": 1}"#).is_err());
        let cfg: AgentConfig = serde_json::from_str(r#"{"c_eps": 0.1}"#).unwrap();
        assert_eq!(cfg.c_eps, 0.1);
        assert_eq!(cfg.c_beta, 0.5);
    }
}
