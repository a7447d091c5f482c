//! Frozen burn-in estimate of the Slater margin and the dual ceiling.

use serde::{Deserialize, Serialize};

use crate::cdf::{fit_phi, AuctionHistory};
use crate::linalg::SymMatrix;
use crate::scalar::{dot, Scalar};
use crate::uplift::{ipw_pseudo_outcome, variance_weight};

/// Agent-side record of one burn-in round; the context and competing bid
/// live in the shared auction history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BurnInOutcome<S> {
    pub bid: S,
    pub won: bool,
    pub v_observed: S,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlaterConfig {
    pub horizon: usize,
    pub grid_k: usize,
    pub density_bound: f64,
    pub ros_target: f64,
    pub c_frak: f64,
    pub c_r: f64,
    pub lambda_max: f64,
    pub ridge: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlaterEstimate {
    /// Held-out plug-in margin `δ̃`.
    pub delta_tilde: f64,
    /// `𝔯 = C_𝔯(√(d ln T / T₀) + L/K)`
    pub radius: f64,
    /// `δ̂ = [δ̃ − 𝔯]₊`
    pub delta_hat: f64,
    /// `Λ = 2C_r/δ̂`, or the configured cap when `δ̂ = 0`.
    pub ceiling: f64,
    /// `δ̂ = 0`: the radius consumed the estimate.
    pub exhausted: bool,
}

/// `𝔯 = C(√(d ln T / T₀) + L/K)`
pub fn slater_radius(c_frak: f64, d: usize, horizon: usize, t0: usize, l: f64, k: usize) -> f64 {
    c_frak * ((d as f64 * (horizon as f64).ln() / t0 as f64).sqrt() + l / k as f64)
}

/// `Λ` from `δ̂`; `None` when the estimate is exhausted.
pub fn dual_ceiling(delta_hat: f64, c_r: f64) -> Option<f64> {
    (delta_hat > 0.0).then(|| 2.0 * c_r / delta_hat)
}

/// Splits the burn-in in half. The first half fits `φ̃`, the residual CDF
/// `F̃` and an IPW-WLS `θ̃`; the second half averages
/// `max_b F̃(b|x)(θ̃ᵀx − (1+ρ)b)` over its contexts.
///
/// Propensities for `θ̃` are leave-one-out (a round's own residual is
/// excluded from its `F̃`) and floored at `1/n₁`.
pub fn estimate_slater<S: Scalar>(
    history: &AuctionHistory<S>,
    burn_in: &[BurnInOutcome<S>],
    grid: &[S],
    cfg: &SlaterConfig,
) -> SlaterEstimate {
    let t0 = burn_in.len();
    let d = history.dim();
    assert!(history.len() >= t0, "history shorter than the burn-in");
    let radius = slater_radius(
        cfg.c_frak,
        d,
        cfg.horizon,
        t0.max(1),
        cfg.density_bound,
        cfg.grid_k,
    );
    let n1 = t0 / 2;
    let delta_tilde = if n1 < 2 || t0 - n1 == 0 {
        0.0
    } else {
        plug_in_margin(history, burn_in, grid, n1, cfg)
    };
    let delta_hat = (delta_tilde - radius).max(0.0);
    let ceiling = dual_ceiling(delta_hat, cfg.c_r);
    SlaterEstimate {
        delta_tilde,
        radius,
        delta_hat,
        ceiling: ceiling.unwrap_or(cfg.lambda_max),
        exhausted: ceiling.is_none(),
    }
}

fn plug_in_margin<S: Scalar>(
    history: &AuctionHistory<S>,
    burn_in: &[BurnInOutcome<S>],
    grid: &[S],
    n1: usize,
    cfg: &SlaterConfig,
) -> f64 {
    let d = history.dim();
    let ridge = S::of(cfg.ridge);
    let first: Vec<usize> = (0..n1).collect();
    let phi = fit_phi(history, &first, ridge);
    let mut resid: Vec<S> = first
        .iter()
        .map(|&s| history.m(s) - dot(&phi, history.x(s)))
        .collect();
    let own: Vec<S> = resid.clone();
    resid.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    let count_le = |v: S| resid.partition_point(|&r| r <= v);

    let floor = S::one() / S::of_usize(n1);
    let mut a = SymMatrix::scaled_identity(d, ridge);
    let mut u = vec![S::zero(); d];
    for &s in &first {
        let x = history.x(s);
        let o = &burn_in[s];
        let shift = o.bid - dot(&phi, x);
        let below = count_le(shift) - usize::from(own[s] <= shift);
        let f = S::of_usize(below) / S::of_usize(n1 - 1);
        let y = ipw_pseudo_outcome(f, floor.sqrt(), o.won, o.v_observed);
        let w = variance_weight(f);
        a.add_outer(x, w);
        for (ui, &xi) in u.iter_mut().zip(x) {
            *ui = *ui + w * xi * y;
        }
    }
    let theta = a
        .cholesky()
        .expect("ridge keeps the design positive definite")
        .solve(&u);

    let coef = S::one() + S::of(cfg.ros_target);
    let n = S::of_usize(n1);
    let mut total = 0.0;
    for s in n1..burn_in.len() {
        let x = history.x(s);
        let value = dot(&theta, x);
        let base = dot(&phi, x);
        let best = grid
            .iter()
            .map(|&b| S::of_usize(count_le(b - base)) / n * (value - coef * b))
            .fold(S::neg_infinity(), |m, v| m.max(v));
        total += best.as_f64();
    }
    total / (burn_in.len() - n1) as f64
}
