//! Mode-agnostic decision pieces shared by the Budget, RoS and unconstrained
//! agents: shadow prices, branch scores and their optimistic envelopes, the
//! branch test, truncation and SquareCB mixing.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cdf::SplitCdfEstimate;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Unc,
    Bgt,
    Ros,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Unc => "unc",
            Mode::Bgt => "bgt",
            Mode::Ros => "ros",
        })
    }
}

/// Current dual state of a mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeParams<S> {
    Unc,
    /// `pacing = Z = T/B ≥ 1`, `mu ∈ [0, 1]`.
    Bgt {
        pacing: S,
        mu: S,
    },
    /// `lambda ∈ [T^{-1/2}, Λ]`.
    Ros {
        lambda: S,
        ceiling: S,
    },
}

/// `(γ, a)` with `a = 1 + γ`.
pub fn shadow_price<S: Scalar>(params: &ModeParams<S>) -> (S, S) {
    let gamma = match *params {
        ModeParams::Unc => S::zero(),
        ModeParams::Bgt { pacing, mu } => pacing * mu,
        ModeParams::Ros { lambda, .. } => {
            if lambda.is_infinite() {
                S::one()
            } else {
                lambda / (S::one() + lambda)
            }
        }
    };
    (gamma, S::one() + gamma)
}

/// `κ_br = min{1/4, 1/(40L)}`
pub fn kappa_br<S: Scalar>(density_bound: S) -> S {
    let quarter = S::of(0.25);
    quarter.min(S::one() / (S::of(40.0) * density_bound))
}

/// `z_t = min{β√(d/T) + 4ε, 1/2}`
pub fn z_threshold<S: Scalar>(beta: S, d: usize, horizon: usize, epsilon: S) -> S {
    let v = beta * (S::of_usize(d) / S::of_usize(horizon)).sqrt() + S::of(4.0) * epsilon;
    v.min(S::half())
}

/// Estimated branch scores `(L̂₀, L̂₁)` on a bid list.
pub fn branch_scores<S: Scalar>(bids: &[S], f_hat: &[S], s: S, a: S) -> (Vec<S>, Vec<S>) {
    bids.iter()
        .zip(f_hat)
        .map(|(&b, &f)| {
            let l0 = f * (s - a * b);
            let l1 = -(S::one() - f) * s - a * b * f;
            (l0, l1)
        })
        .unzip()
}

/// Optimistic envelopes `(U₀, U₁)`.
pub fn branch_ucbs<S: Scalar>(
    l0: &[S],
    l1: &[S],
    f_hat: &[S],
    rho: S,
    epsilon: S,
    c_br: S,
) -> (Vec<S>, Vec<S>) {
    let bonus = c_br * epsilon;
    let u0 = l0
        .iter()
        .zip(f_hat)
        .map(|(&l, &f)| l + f * rho + bonus)
        .collect();
    let u1 = l1
        .iter()
        .zip(f_hat)
        .map(|(&l, &f)| l + (S::one() - f) * rho + bonus)
        .collect();
    (u0, u1)
}

/// Index of the first maximum (smallest position on ties).
pub fn argmax_first<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the last maximum (largest position on ties).
pub fn argmax_last<S: Scalar>(values: &[S]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v >= values[best] {
            best = i;
        }
    }
    best
}

/// Bracket of the two optimistic branch maximizers on an ascending grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchDecision<S> {
    pub b_star_0: S,
    pub b_star_1: S,
    /// Inclusive index range into the grid.
    pub lo: usize,
    pub hi: usize,
    /// `1[F̂(b⋆₁) > κ_br]`
    pub branch: u8,
    /// Index of the `ω̂` maximizer within `lo..=hi`.
    pub info: usize,
}

impl<S: Scalar> BranchDecision<S> {
    pub fn candidates<'a>(&self, grid: &'a [S]) -> &'a [S] {
        &grid[self.lo..=self.hi]
    }
}

/// `b⋆ⱼ = argmax Uⱼ` (ties: smallest bid for j = 1, largest for j = 0), the
/// grid bracket between them, the branch test and the information bid.
pub fn candidate_interval<S: Scalar>(
    grid: &[S],
    f_hat: &[S],
    u0: &[S],
    u1: &[S],
    kappa: S,
) -> BranchDecision<S> {
    assert!(!grid.is_empty(), "bid grid is empty");
    let k0 = argmax_last(u0);
    let k1 = argmax_first(u1);
    let (b0, b1) = (grid[k0], grid[k1]);
    let (bl, bh) = if b0 <= b1 { (b0, b1) } else { (b1, b0) };
    // bid-value bracket, so duplicated grid entries cannot shrink it
    let lo = grid.partition_point(|&b| b < bl);
    let hi = grid.partition_point(|&b| b <= bh) - 1;
    let omega: Vec<S> = f_hat[lo..=hi].iter().map(|&f| f * (S::one() - f)).collect();
    BranchDecision {
        b_star_0: b0,
        b_star_1: b1,
        lo,
        hi,
        branch: u8::from(f_hat[k1] > kappa),
        info: lo + argmax_first(&omega),
    }
}

/// Outcome of the SquareCB draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mix<S> {
    pub play_info: bool,
    pub p: S,
    pub gap: S,
    /// Set when the greedy score falls below the information score.
    pub negative_gap: bool,
}

/// Plays the information action with probability `p = 1/(2 + αΔ̄)`. Always
/// consumes exactly one uniform draw.
pub fn squarecb_choose<S: Scalar, R: Rng + ?Sized>(
    greedy_score: S,
    info_score: S,
    alpha: S,
    rng: &mut R,
) -> Mix<S> {
    let gap = greedy_score - info_score;
    let negative_gap = gap < S::of(-1e-9);
    let p = S::one() / (S::of(2.0) + alpha * gap.max(S::zero()));
    let u: f64 = rng.random();
    Mix {
        play_info: u < p.as_f64(),
        p,
        gap,
        negative_gap,
    }
}

/// Clamp to the safe quantile interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truncated<S> {
    pub bid: S,
    /// The two inverses crossed, so the median planning point was played.
    pub crossed: bool,
    /// A generalized inverse hit an unattained level.
    pub unattained: bool,
}

pub fn safe_truncate<S: Scalar>(b: S, est: &SplitCdfEstimate<S>, z: S) -> Truncated<S> {
    let lo = est.generalized_inverse(z);
    let hi = est.generalized_inverse(S::one() - z);
    let unattained = !lo.attained || !hi.attained;
    if lo.bid > hi.bid {
        return Truncated {
            bid: est.inverse(S::half()),
            crossed: true,
            unattained,
        };
    }
    Truncated {
        bid: b.max(lo.bid).min(hi.bid),
        crossed: false,
        unattained,
    }
}

/// `n + 1` evenly spaced bids on `[0, 1]` (the grid 𝓑_K with `n = K`).
pub fn bid_grid<S: Scalar>(k: usize) -> Vec<S> {
    let k = k.max(1);
    (0..=k).map(|i| S::of_usize(i) / S::of_usize(k)).collect()
}
