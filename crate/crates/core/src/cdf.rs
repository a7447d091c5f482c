//! Split-sample estimator of the competing-bid CDF at the current context.
//!
//! Each round the past `(x_s, m_s)` rows are split by fresh fair coins. The
//! train half fits the ridge location `φ̂`, and the evaluation half supplies
//! residuals shifted to the current context, giving a step CDF `F̂_t`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::{dot, Scalar};

/// Past contexts and competing bids with the running gram `Σ = λ₀I + Σ xxᵀ`.
#[derive(Debug, Clone)]
pub struct AuctionHistory<S> {
    dim: usize,
    lambda0: S,
    xs: Vec<S>,
    ms: Vec<S>,
    gram: SymMatrix<S>,
}

impl<S: Scalar> AuctionHistory<S> {
    pub fn new(dim: usize, lambda0: S) -> Self {
        Self {
            dim,
            lambda0,
            xs: Vec::new(),
            ms: Vec::new(),
            gram: SymMatrix::scaled_identity(dim, lambda0),
        }
    }

    pub fn push(&mut self, x: &[S], m: S) {
        assert_eq!(x.len(), self.dim, "context dimension mismatch");
        self.xs.extend_from_slice(x);
        self.ms.push(m);
        self.gram.add_outer(x, S::one());
    }

    pub fn len(&self) -> usize {
        self.ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda0(&self) -> S {
        self.lambda0
    }

    pub fn x(&self, s: usize) -> &[S] {
        &self.xs[s * self.dim..(s + 1) * self.dim]
    }

    pub fn m(&self, s: usize) -> S {
        self.ms[s]
    }

    /// Running `Σ_t`.
    pub fn gram(&self) -> &SymMatrix<S> {
        &self.gram
    }

    /// `λI + Σ_{s∈rows} x_s x_sᵀ`, rebuilt from scratch.
    pub fn partial_gram(&self, rows: &[usize], lambda: S) -> SymMatrix<S> {
        let mut a = SymMatrix::scaled_identity(self.dim, lambda);
        for &s in rows {
            a.add_outer(self.x(s), S::one());
        }
        a
    }

    /// Gram of every row, recomputed; used to cross-check the running one.
    pub fn recompute_gram(&self) -> SymMatrix<S> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.partial_gram(&all, self.lambda0)
    }
}

/// Fair-coin split of `0..n` into `(train, eval)`.
pub fn random_split<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::with_capacity(n / 2 + 1);
    let mut eval = Vec::with_capacity(n / 2 + 1);
    let mut bits = 0u64;
    for s in 0..n {
        if s % 64 == 0 {
            bits = rng.next_u64();
        }
        if bits & 1 == 1 {
            train.push(s);
        } else {
            eval.push(s);
        }
        bits >>= 1;
    }
    (train, eval)
}

/// Ridge fit `(λI + Σ_S xxᵀ)⁻¹ Σ_S m x` on the listed rows.
pub fn fit_phi<S: Scalar>(history: &AuctionHistory<S>, rows: &[usize], lambda: S) -> Vec<S> {
    let d = history.dim();
    let a = history.partial_gram(rows, lambda);
    let mut z = vec![S::zero(); d];
    for &s in rows {
        let m = history.m(s);
        for (zi, &xi) in z.iter_mut().zip(history.x(s)) {
            *zi = *zi + m * xi;
        }
    }
    a.cholesky()
        .expect("ridge gram is positive definite")
        .solve(&z)
}

/// Whether `λ₀I + Σ_S xxᵀ ⪰ Σ_t / 4`.
pub fn spectral_split_check<S: Scalar>(history: &AuctionHistory<S>, train: &[usize]) -> bool {
    let a_s = history.partial_gram(train, history.lambda0());
    let diff = a_s.add_scaled(history.gram(), S::of(-0.25));
    diff.min_eigenvalue() >= S::of(-1e-9)
}

/// Which lower bound to enforce on the ridge parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RidgeFloor {
    /// `16 ln(dT)`
    #[default]
    PerRound,
    /// `16 ln(dT²)`, enough for a union bound over all rounds.
    UniformOverRounds,
}

impl RidgeFloor {
    pub fn value(self, d: usize, horizon: usize) -> f64 {
        let (d, t) = (d as f64, horizon as f64);
        match self {
            RidgeFloor::PerRound => 16.0 * (d * t).ln(),
            RidgeFloor::UniformOverRounds => 16.0 * (d * t * t).ln(),
        }
    }
}

/// `⌈8 ln T⌉ + 1`
pub fn warm_start_rounds(horizon: usize) -> usize {
    (8.0 * (horizon as f64).ln()).ceil().max(0.0) as usize + 1
}

/// Estimator configuration: ridge, horizon and radius constant.
#[derive(Debug, Clone, Copy)]
pub struct SplitSampleEstimator<S> {
    dim: usize,
    horizon: usize,
    lambda0: S,
    c_eps: S,
    warm_rounds: usize,
}

impl<S: Scalar> SplitSampleEstimator<S> {
    pub fn new(dim: usize, horizon: usize, lambda0: S, c_eps: S) -> Result<Self> {
        Self::with_floor(dim, horizon, lambda0, c_eps, RidgeFloor::PerRound)
    }

    pub fn with_floor(
        dim: usize,
        horizon: usize,
        lambda0: S,
        c_eps: S,
        floor: RidgeFloor,
    ) -> Result<Self> {
        if dim == 0 || horizon == 0 {
            return Err(Error::param("dimension/horizon", "must be positive"));
        }
        let min = floor.value(dim, horizon);
        if lambda0.as_f64() < min - 1e-9 * min.abs() {
            return Err(Error::param(
                "lambda0",
                format!("ridge {} is below the floor {min:.4}", lambda0.as_f64()),
            ));
        }
        if !(c_eps > S::zero()) {
            return Err(Error::param("c_eps", "must be positive"));
        }
        Ok(Self {
            dim,
            horizon,
            lambda0,
            c_eps,
            warm_rounds: warm_start_rounds(horizon),
        })
    }

    pub fn lambda0(&self) -> S {
        self.lambda0
    }

    pub fn warm_rounds(&self) -> usize {
        self.warm_rounds
    }

    /// `ε_t = C(ln T √(d/t) + ln T ‖x_t‖_{Σ_t⁻¹})`, capped at 1.
    pub fn radius(&self, history: &AuctionHistory<S>, x: &[S], t: usize) -> S {
        let log_t = S::of((self.horizon as f64).ln());
        let d = S::of_usize(self.dim);
        let norm = history
            .gram()
            .cholesky()
            .expect("gram is positive definite")
            .inv_quad(x)
            .max(S::zero())
            .sqrt();
        let eps = self.c_eps * (log_t * (d / S::of_usize(t.max(1))).sqrt() + log_t * norm);
        eps.min(S::one())
    }

    /// Estimate for round `t = history.len() + 1` at context `x`.
    pub fn estimate<R: Rng + ?Sized>(
        &self,
        history: &AuctionHistory<S>,
        x: &[S],
        rng: &mut R,
    ) -> SplitCdfEstimate<S> {
        let t = history.len() + 1;
        if t <= self.warm_rounds {
            return SplitCdfEstimate::warm(t, self.dim);
        }
        let (train, eval) = random_split(history.len(), rng);
        if eval.is_empty() {
            return SplitCdfEstimate::warm(t, self.dim);
        }
        let phi_hat = fit_phi(history, &train, self.lambda0);
        let shift = dot(&phi_hat, x);
        let points = eval
            .iter()
            .map(|&s| history.m(s) - dot(&phi_hat, history.x(s)) + shift)
            .collect();
        let epsilon = self.radius(history, x, t);
        SplitCdfEstimate::from_points(phi_hat, points, epsilon, t)
    }
}

/// Immutable per-round CDF estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCdfEstimate<S> {
    phi_hat: Vec<S>,
    eval_points: Vec<S>,
    epsilon: S,
    warm_start: bool,
    t: usize,
    max_jump: S,
}

/// Result of a generalized inverse lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantile<S> {
    pub bid: S,
    /// `false` when no bid in `[0, 1]` reaches the level and 1 was returned.
    pub attained: bool,
}

impl<S: Scalar> SplitCdfEstimate<S> {
    /// Default monotone CDF `F̂(b) = b` with radius 1.
    pub fn warm(t: usize, dim: usize) -> Self {
        Self {
            phi_hat: vec![S::zero(); dim],
            eval_points: Vec::new(),
            epsilon: S::one(),
            warm_start: true,
            t,
            max_jump: S::zero(),
        }
    }

    /// Step CDF over the given residuals (any order).
    pub fn from_points(phi_hat: Vec<S>, mut points: Vec<S>, epsilon: S, t: usize) -> Self {
        assert!(!points.is_empty(), "evaluation split must be nonempty");
        points.sort_unstable_by(|a, b| a.partial_cmp(b).expect("residuals are finite"));
        let n = S::of_usize(points.len());
        let mut run = 1usize;
        let mut longest = 1usize;
        for w in points.windows(2) {
            run = if w[1] == w[0] { run + 1 } else { 1 };
            longest = longest.max(run);
        }
        Self {
            phi_hat,
            eval_points: points,
            epsilon: epsilon.min(S::one()),
            warm_start: false,
            t,
            max_jump: S::of_usize(longest) / n,
        }
    }

    pub fn phi_hat(&self) -> &[S] {
        &self.phi_hat
    }

    pub fn eval_points(&self) -> &[S] {
        &self.eval_points
    }

    pub fn epsilon(&self) -> S {
        self.epsilon
    }

    pub fn is_warm_start(&self) -> bool {
        self.warm_start
    }

    pub fn round(&self) -> usize {
        self.t
    }

    /// Largest single step of the CDF: `1/n` without ties, 0 at warm start.
    pub fn max_jump(&self) -> S {
        self.max_jump
    }

    fn level(&self, count: usize) -> S {
        S::of_usize(count) / S::of_usize(self.eval_points.len())
    }

    /// `F̂_t(b)`
    pub fn eval(&self, b: S) -> S {
        if self.warm_start {
            return b.clamp01();
        }
        self.level(self.eval_points.partition_point(|&p| p <= b))
    }

    /// `inf{b ∈ [0, 1] : F̂_t(b) ≥ u}`
    pub fn generalized_inverse(&self, u: S) -> Quantile<S> {
        if self.warm_start {
            return Quantile {
                bid: u.clamp01(),
                attained: u <= S::one(),
            };
        }
        if u <= self.eval(S::zero()) {
            return Quantile {
                bid: S::zero(),
                attained: true,
            };
        }
        let n = self.eval_points.len();
        let mut k = (u.as_f64() * n as f64).ceil().clamp(0.0, n as f64) as usize;
        while k > 0 && self.level(k - 1) >= u {
            k -= 1;
        }
        while k <= n && self.level(k) < u {
            k += 1;
        }
        if k == 0 || k > n {
            return Quantile {
                bid: S::one(),
                attained: false,
            };
        }
        let b = self.eval_points[k - 1];
        if b > S::one() {
            Quantile {
                bid: S::one(),
                attained: false,
            }
        } else {
            Quantile {
                bid: b.max(S::zero()),
                attained: true,
            }
        }
    }

    /// Bid returned by the generalized inverse, ignoring the attainment flag.
    pub fn inverse(&self, u: S) -> S {
        self.generalized_inverse(u).bid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn five_points() -> SplitCdfEstimate<f64> {
        SplitCdfEstimate::from_points(vec![0.0], vec![1.0, 0.4, 0.2, 0.8, 0.6], 0.1, 100)
    }

    #[test]
    fn empty_history_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (a, b) = random_split(0, &mut rng);
        assert!(a.is_empty() && b.is_empty());
    }

    #[test]
    fn split_is_balanced_disjoint_and_replayable() {
        let n = 100_000;
        let (train, eval) = random_split(n, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(train.len() + eval.len(), n);
        let frac = eval.len() as f64 / n as f64;
        assert!((0.49..=0.51).contains(&frac));
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&eval) {
            assert!(!seen[i]);
            seen[i] = true;
        }
        let again = random_split(n, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(again, (train, eval));
    }

    #[test]
    fn ridge_fit_examples() {
        let mut h = AuctionHistory::<f64>::new(1, 1.0);
        assert_eq!(fit_phi(&h, &[], 1.0), vec![0.0]);
        h.push(&[1.0], 0.5);
        assert!((fit_phi(&h, &[0], 1.0)[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn noiseless_ridge_recovers_phi() {
        let phi = [0.3, -0.2, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut h = AuctionHistory::<f64>::new(3, 1e-6);
        for _ in 0..2000 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
            h.push(&x, dot(&phi, &x));
        }
        let all: Vec<usize> = (0..h.len()).collect();
        let est = fit_phi(&h, &all, 1e-6);
        // the ridge solution must also satisfy its own normal equations
        let a = h.partial_gram(&all, 1e-6);
        let resid = a.mul_vec(&est);
        let mut z = vec![0.0; 3];
        for &s in &all {
            for j in 0..3 {
                z[j] += h.m(s) * h.x(s)[j];
            }
        }
        for j in 0..3 {
            assert!((resid[j] - z[j]).abs() < 1e-8);
            assert!((est[j] - phi[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn gram_tracks_history() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut h = AuctionHistory::<f64>::new(4, 2.0);
        for _ in 0..500 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
            h.push(&x, 0.1);
        }
        let re = h.recompute_gram();
        assert!(h.gram().max_abs_diff(&re) <= 1e-8 * re.max_abs());
        assert!(h.gram().min_eigenvalue() >= 2.0 - 1e-9);
    }

    #[test]
    fn warm_start_window() {
        assert_eq!(warm_start_rounds(1000), 57);
        let est = SplitSampleEstimator::<f64>::new(2, 1000, 200.0, 0.5).unwrap();
        let mut h = AuctionHistory::new(2, 200.0);
        h.push(&[0.5, 0.5], 0.3);
        h.push(&[0.5, 0.5], 0.4);
        let e = est.estimate(&h, &[1.0, 0.0], &mut ChaCha8Rng::seed_from_u64(0));
        assert!(e.is_warm_start());
        assert_eq!(e.round(), 3);
        assert_eq!(e.epsilon(), 1.0);
        assert_eq!(e.eval(0.37), 0.37);
        assert_eq!(e.inverse(0.37), 0.37);
    }

    #[test]
    fn ridge_floor_is_enforced() {
        let floor = 16.0 * (2.0f64 * 1000.0).ln();
        assert!(SplitSampleEstimator::<f64>::new(2, 1000, floor - 0.1, 0.5).is_err());
        assert!(SplitSampleEstimator::<f64>::new(2, 1000, floor, 0.5).is_ok());
        let strict = RidgeFloor::UniformOverRounds.value(2, 1000);
        assert!(SplitSampleEstimator::<f64>::with_floor(
            2,
            1000,
            floor,
            0.5,
            RidgeFloor::UniformOverRounds
        )
        .is_err());
        assert!(strict > floor);
    }

    #[test]
    fn shift_cancels_for_identical_contexts() {
        let x = [0.6, 0.8];
        let est = SplitSampleEstimator::<f64>::new(2, 100, 200.0, 0.5).unwrap();
        let mut h = AuctionHistory::new(2, 200.0);
        let mut ms = Vec::new();
        for i in 0..200 {
            let m = 0.2 + 0.003 * i as f64;
            h.push(&x, m);
            ms.push(m);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = est.estimate(&h, &x, &mut rng);
        assert!(!e.is_warm_start());
        for p in e.eval_points() {
            assert!(ms.iter().any(|m| (m - p).abs() < 1e-12));
        }
    }

    #[test]
    fn step_cdf_examples() {
        let e = five_points();
        assert_eq!(e.eval(0.1), 0.0);
        assert!((e.eval(0.5) - 0.4).abs() < 1e-15);
        assert_eq!(e.eval(1.0), 1.0);
        assert_eq!(e.inverse(0.5), 0.6);
        assert_eq!(e.inverse(0.0), 0.0);
        assert!(e.generalized_inverse(1.0).attained);
        assert_eq!(e.max_jump(), 0.2);
    }

    #[test]
    fn unattainable_level_returns_one() {
        let e = SplitCdfEstimate::from_points(vec![0.0], vec![0.2, 1.5], 0.1, 10);
        let q = e.generalized_inverse(0.8);
        assert_eq!(q.bid, 1.0);
        assert!(!q.attained);
    }

    #[test]
    fn ties_widen_the_jump() {
        let e = SplitCdfEstimate::from_points(vec![0.0], vec![0.3, 0.3, 0.3, 0.9], 0.1, 10);
        assert_eq!(e.max_jump(), 0.75);
        assert_eq!(e.inverse(0.5), 0.3);
        assert_eq!(e.eval(0.3), 0.75);
    }

    #[test]
    fn f32_estimate_matches_f64() {
        let e32 =
            SplitCdfEstimate::<f32>::from_points(vec![0.0], vec![1.0, 0.4, 0.2, 0.8, 0.6], 0.1, 10);
        assert_eq!(e32.inverse(0.5), 0.6);
        assert!((e32.eval(0.5) - 0.4).abs() < 1e-7);
    }

    fn arb_estimate() -> impl Strategy<Value = SplitCdfEstimate<f64>> {
        prop::collection::vec(-0.5f64..1.5, 1..80)
            .prop_map(|pts| SplitCdfEstimate::from_points(vec![0.0], pts, 0.2, 50))
    }

    proptest! {
        #[test]
        fn eval_is_monotone(e in arb_estimate(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(e.eval(lo) <= e.eval(hi));
            prop_assert!((0.0..=1.0).contains(&e.eval(lo)));
        }

        #[test]
        fn quantile_sandwich(e in arb_estimate(), u in 0.0f64..1.0) {
            let q = e.generalized_inverse(u);
            if q.attained {
                let f = e.eval(q.bid);
                prop_assert!(f >= u);
                if q.bid > 0.0 {
                    prop_assert!(f <= u + e.max_jump() + 1e-12);
                }
                // infimum: anything strictly left falls short unless we are at 0
                if q.bid > 0.0 {
                    prop_assert!(e.eval(q.bid - 1e-9) < u || q.bid - 1e-9 < 0.0);
                }
            } else {
                prop_assert!(e.eval(1.0) < u);
            }
        }
    }
}
