use crate::cdf::SplitCdfEstimate;
use crate::scalar::Scalar;

/// A safe-grid bid with its optimistic allocation and payment coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafeGridPoint<S> {
    pub b: S,
    pub f_hat: S,
    /// `min{1, F̂(b) + ε}`
    pub q_dagger: S,
    /// `b · q†`
    pub c_dagger: S,
}

impl<S: Scalar> SafeGridPoint<S> {
    pub fn new(b: S, f_hat: S, epsilon: S) -> Self {
        let q = (f_hat + epsilon).min(S::one());
        Self {
            b,
            f_hat,
            q_dagger: q,
            c_dagger: b * q,
        }
    }
}

/// Safe grid of one round.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeGrid<S> {
    /// Ascending in `b`, hence non-decreasing in `q†`.
    pub points: Vec<SafeGridPoint<S>>,
    /// No augmented bid passed the filter; `points` holds the median
    /// planning point alone.
    pub empty: bool,
}

/// Nominal grid plus the clipped inverse endpoints (and the median when
/// `z = 1/2`), filtered to `F̂(b) ∈ [z, 1 − z]`.
///
/// The step CDF can overshoot a level by one jump at its generalized inverse,
/// so the inverse endpoints are admitted up to `1 − z + jump`.
pub fn build_safe_grid<S: Scalar>(est: &SplitCdfEstimate<S>, z: S, grid: &[S]) -> SafeGrid<S> {
    let eps = est.epsilon();
    let jump = est.max_jump();
    let upper = S::one() - z;
    let mut pts: Vec<(S, bool)> = grid.iter().map(|&b| (b, false)).collect();
    let mut push_inverse = |u: S| {
        let q = est.generalized_inverse(u);
        if q.attained {
            pts.push((q.bid.clamp01(), true));
        }
    };
    push_inverse(z);
    push_inverse(upper);
    if z >= S::half() {
        push_inverse(S::half());
    }
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite bids"));

    // a nominal bid coinciding with an endpoint takes the endpoint tolerance
    let mut merged: Vec<(S, bool)> = Vec::with_capacity(pts.len());
    for (b, endpoint) in pts {
        match merged.last_mut() {
            Some(last) if last.0 == b => last.1 |= endpoint,
            _ => merged.push((b, endpoint)),
        }
    }
    let mut points = Vec::with_capacity(merged.len());
    for (b, endpoint) in merged {
        let f = est.eval(b);
        let ceiling = if endpoint { upper + jump } else { upper };
        if f >= z && f <= ceiling {
            points.push(SafeGridPoint::new(b, f, eps));
        }
    }
    if points.is_empty() {
        let b = est.inverse(S::half()).clamp01();
        return SafeGrid {
            points: vec![SafeGridPoint::new(b, est.eval(b), eps)],
            empty: true,
        };
    }
    SafeGrid {
        points,
        empty: false,
    }
}

/// Lower convex chain of a point set in `(q†, c†)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerHull<S> {
    /// Strictly increasing in `q†`.
    pub vertices: Vec<SafeGridPoint<S>>,
    /// `Δc†/Δq†` between consecutive vertices.
    pub slopes: Vec<S>,
}

impl<S: Scalar> LowerHull<S> {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Value of the chain at `q` (clamped to the end vertices).
    pub fn value_at(&self, q: S) -> S {
        let v = &self.vertices;
        if q <= v[0].q_dagger {
            return v[0].c_dagger;
        }
        for w in v.windows(2) {
            if q <= w[1].q_dagger {
                let t = (q - w[0].q_dagger) / (w[1].q_dagger - w[0].q_dagger);
                return w[0].c_dagger + t * (w[1].c_dagger - w[0].c_dagger);
            }
        }
        v[v.len() - 1].c_dagger
    }
}

/// `b` lies on or above the segment `a → c` (requires `a.q < b.q < c.q`).
fn on_or_above<S: Scalar>(
    a: &SafeGridPoint<S>,
    b: &SafeGridPoint<S>,
    c: &SafeGridPoint<S>,
) -> bool {
    (b.c_dagger - a.c_dagger) * (c.q_dagger - a.q_dagger)
        >= (c.c_dagger - a.c_dagger) * (b.q_dagger - a.q_dagger)
}

/// Monotone-chain scan. Ties in `q†` keep the smallest `c†` (then the
/// smallest bid); a middle vertex is popped unless slopes strictly increase.
pub fn lower_hull<S: Scalar>(points: &[SafeGridPoint<S>]) -> LowerHull<S> {
    assert!(!points.is_empty(), "hull of an empty point set");
    let mut sorted = points.to_vec();
    sorted.sort_by(|x, y| {
        x.q_dagger
            .partial_cmp(&y.q_dagger)
            .unwrap()
            .then(x.c_dagger.partial_cmp(&y.c_dagger).unwrap())
            .then(x.b.partial_cmp(&y.b).unwrap())
    });
    sorted.dedup_by(|later, earlier| later.q_dagger == earlier.q_dagger);

    let mut chain: Vec<SafeGridPoint<S>> = Vec::with_capacity(sorted.len());
    for p in sorted {
        while chain.len() >= 2 && on_or_above(&chain[chain.len() - 2], &chain[chain.len() - 1], &p)
        {
            chain.pop();
        }
        chain.push(p);
    }
    let slopes = chain
        .windows(2)
        .map(|w| (w[1].c_dagger - w[0].c_dagger) / (w[1].q_dagger - w[0].q_dagger))
        .collect();
    LowerHull {
        vertices: chain,
        slopes,
    }
}

/// All-chords reference: after the tie rule, a point is a vertex unless some
/// chord between points on either side passes on or below it.
pub fn brute_force_lower_hull<S: Scalar>(points: &[SafeGridPoint<S>]) -> Vec<SafeGridPoint<S>> {
    let mut reps: Vec<SafeGridPoint<S>> = Vec::new();
    for p in points {
        let dominated = points.iter().any(|o| {
            o.q_dagger == p.q_dagger
                && (o.c_dagger < p.c_dagger || (o.c_dagger == p.c_dagger && o.b < p.b))
        });
        if !dominated && !reps.iter().any(|r| r.q_dagger == p.q_dagger) {
            reps.push(*p);
        }
    }
    let keep: Vec<SafeGridPoint<S>> = reps
        .iter()
        .filter(|p| {
            !reps.iter().any(|a| {
                a.q_dagger < p.q_dagger
                    && reps
                        .iter()
                        .any(|c| c.q_dagger > p.q_dagger && on_or_above(a, p, c))
            })
        })
        .copied()
        .collect();
    let mut keep = keep;
    keep.sort_by(|x, y| x.q_dagger.partial_cmp(&y.q_dagger).unwrap());
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::bid_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pt(q: f64, c: f64) -> SafeGridPoint<f64> {
        SafeGridPoint {
            b: c,
            f_hat: q,
            q_dagger: q,
            c_dagger: c,
        }
    }

    #[test]
    fn middle_point_above_chord_is_removed() {
        let h = lower_hull(&[pt(0.2, 0.1), pt(0.5, 0.4), pt(0.8, 0.5)]);
        assert_eq!(h.vertices, vec![pt(0.2, 0.1), pt(0.8, 0.5)]);
        assert_eq!(h.slopes.len(), 1);
        assert!((h.slopes[0] - 0.4 / 0.6).abs() < 1e-12);
    }

    #[test]
    fn collinear_middle_is_removed() {
        let h = lower_hull(&[pt(0.0, 0.0), pt(0.5, 0.25), pt(1.0, 0.5)]);
        assert_eq!(h.len(), 2);
    }

    #[test]
    fn single_point() {
        let h = lower_hull(&[pt(0.3, 0.1)]);
        assert_eq!(h.vertices, vec![pt(0.3, 0.1)]);
        assert!(h.slopes.is_empty());
    }

    #[test]
    fn ties_keep_lowest_payment() {
        let a = SafeGridPoint {
            b: 0.4,
            f_hat: 0.5,
            q_dagger: 0.5,
            c_dagger: 0.2,
        };
        let b = SafeGridPoint {
            b: 0.3,
            c_dagger: 0.15,
            ..a
        };
        let h = lower_hull(&[a, b]);
        assert_eq!(h.vertices, vec![b]);
    }

    fn dyadic_instance(rng: &mut ChaCha8Rng) -> Vec<SafeGridPoint<f64>> {
        // dyadic coordinates keep every cross product exact
        let n = rng.random_range(1..=50);
        (0..n)
            .map(|_| {
                let q = rng.random_range(0..=32) as f64 / 32.0;
                let c = rng.random_range(0..=64) as f64 / 64.0;
                SafeGridPoint {
                    b: rng.random_range(0..=16) as f64 / 16.0,
                    f_hat: q,
                    q_dagger: q,
                    c_dagger: c,
                }
            })
            .collect()
    }

    fn check_invariants(points: &[SafeGridPoint<f64>], h: &LowerHull<f64>) {
        for w in h.vertices.windows(2) {
            assert!(w[1].q_dagger > w[0].q_dagger);
        }
        for w in h.slopes.windows(2) {
            assert!(w[1] > w[0]);
        }
        for p in points {
            assert!(p.c_dagger >= h.value_at(p.q_dagger) - 1e-12);
        }
    }

    #[test]
    fn matches_all_chords_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let pts = dyadic_instance(&mut rng);
            let h = lower_hull(&pts);
            assert_eq!(h.vertices, brute_force_lower_hull(&pts));
            check_invariants(&pts, &h);
        }
    }

    #[test]
    fn invariants_on_continuous_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let n = rng.random_range(1..=50);
            let pts: Vec<_> = (0..n)
                .map(|_| {
                    let b: f64 = rng.random();
                    let f: f64 = rng.random();
                    SafeGridPoint::new(b, f, 0.05)
                })
                .collect();
            check_invariants(&pts, &lower_hull(&pts));
        }
    }

    #[test]
    fn warm_start_safe_grid() {
        let est = SplitCdfEstimate::<f64>::warm(1, 2);
        let g = build_safe_grid(&est, 0.25, &bid_grid(4));
        let bids: Vec<f64> = g.points.iter().map(|p| p.b).collect();
        assert_eq!(bids, vec![0.25, 0.5, 0.75]);
        assert!(!g.empty);
    }

    #[test]
    fn zero_threshold_keeps_whole_grid() {
        let est = SplitCdfEstimate::<f64>::from_points(vec![0.0], vec![0.1, 0.3, 0.6, 0.9], 0.1, 5);
        let g = build_safe_grid(&est, 0.0, &bid_grid(10));
        assert_eq!(g.points.len(), 11);
        for p in &g.points {
            assert!((p.q_dagger - (p.f_hat + 0.1).min(1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn endpoints_within_one_jump() {
        let est = SplitCdfEstimate::<f64>::from_points(
            vec![0.0],
            vec![0.13, 0.27, 0.41, 0.58, 0.77],
            0.05,
            9,
        );
        let z = 0.3;
        let g = build_safe_grid(&est, z, &bid_grid(10));
        assert!(g.points.iter().any(|p| p.b == 0.27));
        assert!(g.points.iter().any(|p| p.b == 0.58));
        for p in &g.points {
            assert!(p.f_hat >= z && p.f_hat <= 1.0 - z + est.max_jump());
        }
    }

    #[test]
    fn empty_safe_grid_yields_median() {
        // every residual sits below zero, so F̂ ≡ 1 on [0, 1]
        let est = SplitCdfEstimate::<f64>::from_points(
            vec![0.0],
            (1..=10).map(|i| -0.05 * i as f64).collect(),
            0.05,
            25,
        );
        let g = build_safe_grid(&est, 0.2, &bid_grid(4));
        assert!(g.empty);
        assert_eq!(g.points.len(), 1);
        assert_eq!(g.points[0].b, 0.0);
    }
}
