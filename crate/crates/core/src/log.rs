use serde::{Deserialize, Serialize};

/// Version of the round-log column layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    BurnIn,
    #[default]
    Main,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackReason {
    /// Confidence radius above the safe threshold.
    Radius,
    /// Allocation interval between the branch maximizers too long.
    WideInterval,
    /// No safe-grid bid in the local interval.
    EmptyLocal,
    /// Safe grid empty; the median planning point was played.
    EmptySafeGrid,
}

/// One executed round. Agent fields are filled when the bid is chosen; the
/// episode runner adds the outcome and the environment-truth columns.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoundLog {
    pub schema_version: u32,
    pub t: usize,
    pub phase: Phase,
    /// Context coordinates joined by `;`, empty when not recorded.
    pub x: String,
    pub m: f64,
    pub bid: f64,
    pub won: bool,
    pub payment: f64,
    /// `1[win](v1 − v0 − b)`
    pub realized_reward: f64,
    pub expected_reward: f64,
    pub expected_margin: f64,
    pub true_uplift: f64,
    pub cumulative_spend: f64,
    /// `θ̂ᵀx_t`
    pub s_hat: f64,
    /// `F̂_t(b_t)`
    pub f_hat_bid: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub beta: f64,
    pub z: f64,
    pub eval_size: usize,
    pub max_jump: f64,
    pub warm_start: bool,
    pub branch: Option<u8>,
    pub fallback: bool,
    pub fallback_reason: Option<FallbackReason>,
    pub p_mix: Option<f64>,
    pub greedy_bid: Option<f64>,
    /// Bid chosen before truncation.
    pub planned_bid: Option<f64>,
    pub info_bid: Option<f64>,
    /// `μ_t` (Budget) or `λ_t` (RoS) at decision time.
    pub dual: Option<f64>,
    pub lambda_max: Option<f64>,
    pub hull_size: Option<usize>,
    pub g_opt: Option<f64>,
    pub inverse_crossed: bool,
    pub unattained: bool,
    pub negative_gap: bool,
    pub mesh_violation: bool,
}

impl RoundLog {
    pub fn new(t: usize, phase: Phase) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            t,
            phase,
            ..Self::default()
        }
    }

    /// Whether the round's bid lies in the safe band
    /// `F̂(b) ∈ [z, 1 − z + jump]`.
    pub fn in_safe_band(&self) -> bool {
        let tol = 1e-12;
        self.f_hat_bid + tol >= self.z && self.f_hat_bid <= 1.0 - self.z + self.max_jump + tol
    }
}

pub fn format_context(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| v.to_string()).collect();
    parts.join(";")
}

pub fn parse_context(s: &str) -> Vec<f64> {
    if s.is_empty() {
        return Vec::new();
    }
    s.split(';').filter_map(|p| p.parse().ok()).collect()
}
