//! IPW pseudo-outcomes and the variance-weighted ridge state for the uplift `θ⋆`.

use crate::linalg::SymMatrix;
use crate::scalar::{dot, Scalar};

/// Truncated IPW pseudo-outcome for the observed branch.
pub fn ipw_pseudo_outcome<S: Scalar>(f_hat: S, epsilon: S, won: bool, v_observed: S) -> S {
    let floor = epsilon * epsilon;
    if won {
        v_observed / floor.max(f_hat)
    } else {
        -v_observed / floor.max(S::one() - f_hat)
    }
}

/// `ω = F̂(1 − F̂)`
pub fn variance_weight<S: Scalar>(f_hat: S) -> S {
    let f = f_hat.clamp01();
    f * (S::one() - f)
}

pub(crate) fn beta_schedule<S: Scalar>(
    d: usize,
    t: usize,
    lambda0: S,
    log_horizon: S,
    sum_eps_sq: S,
    c_beta: S,
) -> S {
    let growth = S::of_usize(d) * (S::one() + S::of_usize(t) / lambda0).ln() + log_horizon;
    c_beta * (growth.max(S::zero()).sqrt() + sum_eps_sq.sqrt() + lambda0.sqrt())
}

/// Ridge-weighted sufficient statistics `A = λ₀I + Σ ωxxᵀ`, `u = Σ ωxỹ`.
#[derive(Debug, Clone)]
pub struct WlsState<S> {
    a: SymMatrix<S>,
    u: Vec<S>,
    t: usize,
    sum_eps: S,
    sum_eps_sq: S,
    lambda0: S,
    horizon: usize,
}

impl<S: Scalar> WlsState<S> {
    pub fn new(dim: usize, lambda0: S, horizon: usize) -> Self {
        Self {
            a: SymMatrix::scaled_identity(dim, lambda0),
            u: vec![S::zero(); dim],
            t: 0,
            sum_eps: S::zero(),
            sum_eps_sq: S::zero(),
            lambda0,
            horizon,
        }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn rounds(&self) -> usize {
        self.t
    }

    pub fn design(&self) -> &SymMatrix<S> {
        &self.a
    }

    pub fn moment(&self) -> &[S] {
        &self.u
    }

    pub fn sum_eps_sq(&self) -> S {
        self.sum_eps_sq
    }

    /// Absorbs one round. `epsilon` is that round's CDF radius, feeding the
    /// β schedule.
    pub fn update(&mut self, x: &[S], omega: S, y_tilde: S, epsilon: S) {
        debug_assert!(omega >= S::zero() && omega <= S::of(0.25) + S::epsilon());
        self.a.add_outer(x, omega);
        for (ui, &xi) in self.u.iter_mut().zip(x) {
            *ui = *ui + omega * xi * y_tilde;
        }
        self.t += 1;
        self.sum_eps = self.sum_eps + epsilon;
        self.sum_eps_sq = self.sum_eps_sq + epsilon * epsilon;
    }

    /// `θ̂ = A⁻¹u`
    pub fn theta_hat(&self) -> Vec<S> {
        self.a
            .cholesky()
            .expect("design is positive definite")
            .solve(&self.u)
    }

    /// `β_t = C(√(d ln(1 + t/λ₀) + ln T) + √Σε² + √λ₀)`
    pub fn beta(&self, c_beta: S) -> S {
        beta_schedule(
            self.dim(),
            self.t,
            self.lambda0,
            S::of((self.horizon as f64).ln()),
            self.sum_eps_sq,
            c_beta,
        )
    }

    /// `β‖x‖_{A⁻¹}`
    pub fn radius(&self, x: &[S], beta: S) -> S {
        let q = self
            .a
            .cholesky()
            .expect("design is positive definite")
            .inv_quad(x);
        beta * q.max(S::zero()).sqrt()
    }

    /// Point estimate and confidence radius at `x` from a single factorization.
    pub fn predict(&self, x: &[S], beta: S) -> (S, S) {
        let ch = self.a.cholesky().expect("design is positive definite");
        let theta = ch.solve(&self.u);
        (dot(&theta, x), beta * ch.inv_quad(x).max(S::zero()).sqrt())
    }

    pub fn diagnostics(&self) -> OracleAggregates {
        let s1 = self.sum_eps.as_f64();
        let s2 = 1.0 + self.sum_eps_sq.as_f64();
        OracleAggregates {
            delta1: s1,
            delta2: s2,
            delta2_bar: self.dim() as f64 + s2,
        }
    }
}

/// Oracle-error aggregates `Δ₁ = Σε`, `Δ₂ = 1 + Σε²`, `Δ̄₂ = d + Δ₂`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OracleAggregates {
    pub delta1: f64,
    pub delta2: f64,
    pub delta2_bar: f64,
}
