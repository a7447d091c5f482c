//! Return-on-spend agent: uniform burn-in that freezes a Slater-based dual
//! ceiling, then hull-restricted SquareCB on an endpoint-augmented safe grid.

mod hull;
mod slater;

pub use hull::{
    brute_force_lower_hull, build_safe_grid, lower_hull, LowerHull, SafeGrid, SafeGridPoint,
};
pub use slater::{
    dual_ceiling, estimate_slater, slater_radius, BurnInOutcome, SlaterConfig, SlaterEstimate,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::budget::{fill_estimates, settle_round};
use crate::cdf::{AuctionHistory, SplitSampleEstimator};
use crate::env::{EnvironmentSpec, Feedback};
use crate::error::{Error, Result};
use crate::log::{FallbackReason, Phase, RoundLog};
use crate::params::AgentParams;
use crate::policy::{
    argmax_first, argmax_last, bid_grid, branch_scores, branch_ucbs, kappa_br, squarecb_choose,
    z_threshold,
};
use crate::scalar::{convert_slice, Scalar};
use crate::uplift::{ipw_pseudo_outcome, variance_weight, WlsState};

/// `T₀ = ⌈√T⌉`
pub fn burn_in_rounds(horizon: usize) -> usize {
    (horizon as f64).sqrt().ceil() as usize
}

/// Local allocation interval between the two RoS branch maximizers.
#[derive(Debug, Clone, PartialEq)]
pub struct RosCandidates<S> {
    /// Vertex indices of `b⋆₀`, `b⋆₁`.
    pub star0: usize,
    pub star1: usize,
    /// `I_t = [q_lo, q_hi]`
    pub q_lo: S,
    pub q_hi: S,
    /// Safe-grid indices with `q†` in `I_t`.
    pub local: Vec<usize>,
    /// Hull-vertex indices with `q†` in `I_t`.
    pub candidates: Vec<usize>,
    /// Safe-grid index of the `ω̂` maximizer over `local`.
    pub info: usize,
    /// `|q₀† − q₁†| > κ_br`
    pub fallback: bool,
    /// `1[F̂(b⋆₁) > κ_br]`
    pub branch: u8,
}

/// Branch maximizers over hull vertices (ties as on the nominal grid: last
/// for `U₀`, first for `U₁`), the local interval and the information bid.
pub fn ros_candidates<S: Scalar>(
    hull: &LowerHull<S>,
    safe: &[SafeGridPoint<S>],
    u0: &[S],
    u1: &[S],
    kappa: S,
) -> RosCandidates<S> {
    assert!(!hull.is_empty(), "hull is empty");
    let v = &hull.vertices;
    let star0 = argmax_last(u0);
    let star1 = argmax_first(u1);
    let (q0, q1) = (v[star0].q_dagger, v[star1].q_dagger);
    let (q_lo, q_hi) = if q0 <= q1 { (q0, q1) } else { (q1, q0) };
    let inside = |q: S| q >= q_lo && q <= q_hi;
    let local: Vec<usize> = (0..safe.len())
        .filter(|&i| inside(safe[i].q_dagger))
        .collect();
    let candidates: Vec<usize> = (0..v.len()).filter(|&i| inside(v[i].q_dagger)).collect();
    let omega: Vec<S> = local
        .iter()
        .map(|&i| variance_weight(safe[i].f_hat))
        .collect();
    let info = local[argmax_first(&omega)];
    RosCandidates {
        star0,
        star1,
        q_lo,
        q_hi,
        local,
        candidates,
        info,
        fallback: q_hi - q_lo > kappa,
        branch: u8::from(v[star1].f_hat > kappa),
    }
}

/// Projected exponentiated update `λ ← Proj_[lo, hi]{λ·exp(−η g)}`.
pub fn ros_dual_step(lambda: f64, eta: f64, g_opt: f64, lo: f64, hi: f64) -> f64 {
    (lambda * (-eta * g_opt).exp()).clamp(lo, hi)
}

#[derive(Debug, Clone)]
struct Pending<S> {
    x: Vec<S>,
    bid: S,
    f_hat_bid: S,
    epsilon: S,
    g_opt: S,
}

#[derive(Debug, Clone)]
pub struct RosAgent<S: Scalar> {
    params: AgentParams,
    ros_target: f64,
    estimator: SplitSampleEstimator<S>,
    history: AuctionHistory<S>,
    wls: WlsState<S>,
    grid: Vec<S>,
    kappa: S,
    t0: usize,
    burn_in: Vec<BurnInOutcome<S>>,
    slater: Option<SlaterEstimate>,
    lambda: f64,
    lambda_floor: f64,
    ceiling: f64,
    rounds: usize,
    spend: f64,
    mesh_violations: usize,
    rng: ChaCha8Rng,
    pending: Option<Pending<S>>,
}

impl<S: Scalar> RosAgent<S> {
    pub fn new(params: AgentParams, ros_target: f64, seed: u64) -> Result<Self> {
        if !(ros_target >= 0.0 && ros_target.is_finite()) {
            return Err(Error::param(
                "ros_target",
                format!("must be nonnegative, got {ros_target}"),
            ));
        }
        let lambda0 = S::of(params.lambda0);
        let estimator = SplitSampleEstimator::with_floor(
            params.dim,
            params.horizon,
            lambda0,
            S::of(params.c_eps),
            params.ridge_floor,
        )?;
        let floor = 1.0 / (params.horizon as f64).sqrt();
        Ok(Self {
            estimator,
            history: AuctionHistory::new(params.dim, lambda0),
            wls: WlsState::new(params.dim, lambda0, params.horizon),
            grid: bid_grid(params.grid_k),
            kappa: kappa_br(S::of(params.density_bound)),
            t0: burn_in_rounds(params.horizon),
            burn_in: Vec::new(),
            slater: None,
            lambda: floor,
            lambda_floor: floor,
            ceiling: params.lambda_max.max(floor),
            rounds: 0,
            spend: 0.0,
            mesh_violations: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: None,
            ros_target,
            params,
        })
    }

    pub fn params(&self) -> &AgentParams {
        &self.params
    }

    pub fn burn_in_length(&self) -> usize {
        self.t0
    }

    pub fn phase(&self) -> Phase {
        if self.rounds < self.t0 {
            Phase::BurnIn
        } else {
            Phase::Main
        }
    }

    /// `λ_t` for the next round.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `Λ`; the configured cap until burn-in completes.
    pub fn ceiling(&self) -> f64 {
        self.ceiling
    }

    pub fn slater(&self) -> Option<&SlaterEstimate> {
        self.slater.as_ref()
    }

    pub fn spend(&self) -> f64 {
        self.spend
    }

    pub fn mesh_violations(&self) -> usize {
        self.mesh_violations
    }

    pub fn wls(&self) -> &WlsState<S> {
        &self.wls
    }

    pub fn grid(&self) -> &[S] {
        &self.grid
    }

    /// Chooses the bid of round `t = rounds + 1`.
    pub fn step(&mut self, x: &[f64]) -> RoundLog {
        assert!(self.pending.is_none(), "observe() must follow every bid");
        let t = self.rounds + 1;
        let xs: Vec<S> = convert_slice(x);
        let est = self.estimator.estimate(&self.history, &xs, &mut self.rng);
        let beta = self.wls.beta(S::of(self.params.c_beta));
        let (s, rho) = self.wls.predict(&xs, beta);
        let eps = est.epsilon();
        let z = z_threshold(beta, self.params.dim, self.params.horizon, eps);
        let coef = S::one() + S::of(self.ros_target);

        if t <= self.t0 {
            let mut log = RoundLog::new(t, Phase::BurnIn);
            let bid = self.grid[self.rng.random_range(0..self.grid.len())];
            let f_hat_bid = est.eval(bid);
            fill_estimates(&mut log, &est, bid, f_hat_bid, s, rho, beta, z);
            log.planned_bid = Some(bid.as_f64());
            self.pending = Some(Pending {
                x: xs,
                bid,
                f_hat_bid,
                epsilon: eps,
                g_opt: S::zero(),
            });
            return log;
        }

        let mut log = RoundLog::new(t, Phase::Main);
        let lambda = S::of(self.lambda);
        let a = S::one() + S::of(self.ros_target) * lambda / (S::one() + lambda);
        let mesh = S::of(self.params.density_bound / self.params.grid_k as f64) + S::of(4.0) * eps;
        log.mesh_violation = mesh > self.kappa / S::of(8.0);
        let safe = build_safe_grid(&est, z, &self.grid);
        let hull = lower_hull(&safe.points);
        log.hull_size = Some(hull.len());

        let bid = if safe.empty {
            log.fallback = true;
            log.fallback_reason = Some(FallbackReason::EmptySafeGrid);
            log.info_bid = Some(safe.points[0].b.as_f64());
            safe.points[0].b
        } else {
            let vb: Vec<S> = hull.vertices.iter().map(|p| p.b).collect();
            let vf: Vec<S> = hull.vertices.iter().map(|p| p.f_hat).collect();
            let (l0, l1) = branch_scores(&vb, &vf, s, a);
            let (u0, u1) = branch_ucbs(&l0, &l1, &vf, rho, eps, S::of(self.params.c_ros));
            let cand = ros_candidates(&hull, &safe.points, &u0, &u1, self.kappa);
            let info = safe.points[cand.info];
            log.info_bid = Some(info.b.as_f64());
            if cand.fallback {
                log.fallback = true;
                log.fallback_reason = Some(FallbackReason::WideInterval);
                info.b
            } else {
                let active = if cand.branch == 1 { &l1 } else { &l0 };
                let scores: Vec<S> = cand.candidates.iter().map(|&i| active[i]).collect();
                let greedy = cand.candidates[argmax_first(&scores)];
                let (il0, il1) = branch_scores(&[info.b], &[info.f_hat], s, a);
                let info_score = if cand.branch == 1 { il1[0] } else { il0[0] };
                let mix = squarecb_choose(
                    active[greedy],
                    info_score,
                    S::of(self.params.alpha),
                    &mut self.rng,
                );
                log.branch = Some(cand.branch);
                log.p_mix = Some(mix.p.as_f64());
                log.negative_gap = mix.negative_gap;
                log.greedy_bid = Some(vb[greedy].as_f64());
                if mix.play_info {
                    info.b
                } else {
                    vb[greedy]
                }
            }
        };
        log.planned_bid = Some(bid.as_f64());
        let f_hat_bid = est.eval(bid);
        fill_estimates(&mut log, &est, bid, f_hat_bid, s, rho, beta, z);
        debug_assert!(
            safe.empty || log.in_safe_band(),
            "RoS bid left the safe band"
        );
        let g_opt = f_hat_bid * (s - coef * bid) + f_hat_bid * rho;
        log.g_opt = Some(g_opt.as_f64());
        log.dual = Some(self.lambda);
        log.lambda_max = Some(self.ceiling);
        if log.mesh_violation {
            self.mesh_violations += 1;
        }
        self.pending = Some(Pending {
            x: xs,
            bid,
            f_hat_bid,
            epsilon: eps,
            g_opt,
        });
        log
    }

    /// Absorbs the feedback of the last bid; freezes `Λ` after round `T₀`.
    pub fn observe(&mut self, feedback: &Feedback) {
        let p = self
            .pending
            .take()
            .expect("observe() without a pending bid");
        let m = feedback.m;
        let won = p.bid.as_f64() >= m;
        let v = S::of(feedback.v_observed);
        let y = ipw_pseudo_outcome(p.f_hat_bid, p.epsilon, won, v);
        self.wls
            .update(&p.x, variance_weight(p.f_hat_bid), y, p.epsilon);
        if won {
            self.spend += p.bid.as_f64();
        }
        self.history.push(&p.x, S::of(m));
        self.rounds += 1;

        if self.rounds <= self.t0 {
            self.burn_in.push(BurnInOutcome {
                bid: p.bid,
                won,
                v_observed: v,
            });
            if self.rounds == self.t0 {
                self.freeze_ceiling();
            }
        } else {
            self.lambda = ros_dual_step(
                self.lambda,
                self.params.eta,
                p.g_opt.as_f64(),
                self.lambda_floor,
                self.ceiling,
            );
        }
    }

    fn freeze_ceiling(&mut self) {
        let cfg = SlaterConfig {
            horizon: self.params.horizon,
            grid_k: self.params.grid_k,
            density_bound: self.params.density_bound,
            ros_target: self.ros_target,
            c_frak: self.params.c_frak,
            c_r: self.params.c_r,
            lambda_max: self.params.lambda_max,
            ridge: self.params.slater_ridge,
        };
        let est = estimate_slater(&self.history, &self.burn_in, &self.grid, &cfg);
        if est.exhausted {
            log::warn!(
                "Slater estimate exhausted by its radius (δ̃ = {:.4}, 𝔯 = {:.4}); using Λ = {}",
                est.delta_tilde,
                est.radius,
                est.ceiling
            );
        }
        self.ceiling = est.ceiling.max(self.lambda_floor);
        self.lambda = self.lambda_floor;
        self.slater = Some(est);
    }
}

/// Drives an RoS agent over all `T` rounds of the environment.
pub fn run_ros_episode<S: Scalar>(
    spec: &EnvironmentSpec,
    params: &AgentParams,
    agent_seed: u64,
    record_x: bool,
) -> Result<(Vec<RoundLog>, Option<SlaterEstimate>)> {
    let mut agent = RosAgent::<S>::new(*params, spec.ros_target(), agent_seed)?;
    let mut logs = Vec::with_capacity(spec.horizon());
    for t in 1..=spec.horizon() {
        let sample = spec.sample_round_at(t)?;
        let mut log = agent.step(&sample.x);
        agent.observe(&Feedback::observe(&sample, log.bid));
        settle_round(&mut log, spec, &sample, agent.spend(), record_x);
        logs.push(log);
    }
    Ok((logs, agent.slater().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ContextLaw, NoiseModel};
    use crate::params::AgentConfig;

    fn env(horizon: usize) -> EnvironmentSpec {
        EnvironmentSpec::new(
            vec![0.65, 0.65],
            vec![0.05, 0.05],
            ContextLaw::SpherePositive { dimension: 2 },
            NoiseModel::gaussian(0.2).unwrap(),
            horizon,
            1.0,
            17,
        )
        .unwrap()
    }

    fn params(spec: &EnvironmentSpec, cfg: AgentConfig) -> AgentParams {
        cfg.resolve(spec.horizon(), spec.dimension(), spec.noise().density_bound)
            .unwrap()
    }

    #[test]
    fn burn_in_length() {
        assert_eq!(burn_in_rounds(100), 10);
        assert_eq!(burn_in_rounds(101), 11);
        assert_eq!(burn_in_rounds(10_000), 100);
    }

    #[test]
    fn dual_step_examples() {
        assert_eq!(ros_dual_step(0.7, 0.1, 0.0, 0.01, 10.0), 0.7);
        assert_eq!(ros_dual_step(0.01, 0.1, 0.5, 0.01, 10.0), 0.01);
        let l = ros_dual_step(1.0, 0.01, -0.5, 0.01, 10.0);
        assert!((l - 0.005f64.exp()).abs() < 1e-15);
        assert!((l - 1.00501).abs() < 1e-5);
        assert_eq!(ros_dual_step(9.99, 1.0, -5.0, 0.01, 10.0), 10.0);
    }

    fn pts(coords: &[(f64, f64)]) -> Vec<SafeGridPoint<f64>> {
        coords
            .iter()
            .map(|&(b, f)| SafeGridPoint::new(b, f, 0.0))
            .collect()
    }

    #[test]
    fn equal_branch_maximizers_never_fall_back() {
        let safe = pts(&[(0.1, 0.3), (0.2, 0.45), (0.3, 0.6)]);
        let hull = lower_hull(&safe);
        let u = vec![0.0; hull.len()];
        let mut u0 = u.clone();
        let mut u1 = u;
        u0[0] = 1.0;
        u1[0] = 1.0;
        let c = ros_candidates(&hull, &safe, &u0, &u1, 0.05);
        assert_eq!(c.q_lo, c.q_hi);
        assert!(!c.fallback);
        assert_eq!(c.candidates, vec![0]);
    }

    #[test]
    fn wide_interval_falls_back() {
        let safe = pts(&[(0.1, 0.2), (0.5, 0.7)]);
        let hull = lower_hull(&safe);
        assert_eq!(hull.len(), 2);
        let c = ros_candidates(&hull, &safe, &[1.0, 0.0], &[0.0, 1.0], 0.25);
        assert!((c.q_hi - c.q_lo - 0.5).abs() < 1e-12);
        assert!(c.fallback);
    }

    #[test]
    fn information_bid_maximizes_omega_on_local_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..300 {
            let n = rng.random_range(2..30);
            let mut f: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
            f.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let safe: Vec<_> = f
                .iter()
                .enumerate()
                .map(|(i, &fi)| SafeGridPoint::new(i as f64 / n as f64, fi, 0.02))
                .collect();
            let hull = lower_hull(&safe);
            let u0: Vec<f64> = (0..hull.len()).map(|_| rng.random()).collect();
            let u1: Vec<f64> = (0..hull.len()).map(|_| rng.random()).collect();
            let c = ros_candidates(&hull, &safe, &u0, &u1, 0.25);
            let best = variance_weight(safe[c.info].f_hat);
            for &i in &c.local {
                assert!(variance_weight(safe[i].f_hat) <= best);
            }
            for (i, p) in safe.iter().enumerate() {
                let inside = p.q_dagger >= c.q_lo && p.q_dagger <= c.q_hi;
                assert_eq!(inside, c.local.contains(&i));
            }
            assert!(c
                .candidates
                .iter()
                .all(|&i| c.local.iter().any(|&j| safe[j] == hull.vertices[i])));
        }
    }

    #[test]
    fn burn_in_then_bounded_dual() {
        let spec = env(900);
        let p = params(&spec, AgentConfig::default());
        let (logs, slater) = run_ros_episode::<f64>(&spec, &p, 3, false).unwrap();
        assert_eq!(logs.len(), 900);
        assert!(slater.is_some());
        let t0 = burn_in_rounds(900);
        assert!(logs[..t0]
            .iter()
            .all(|l| l.phase == Phase::BurnIn && l.dual.is_none()));
        let floor = 1.0 / 30.0;
        for l in &logs[t0..] {
            assert_eq!(l.phase, Phase::Main);
            let (lam, cap) = (l.dual.unwrap(), l.lambda_max.unwrap());
            assert!(lam >= floor - 1e-15 && lam <= cap + 1e-12);
            assert!(l.fallback_reason == Some(FallbackReason::EmptySafeGrid) || l.in_safe_band());
        }
        assert_eq!(logs[t0].dual, Some(floor));
    }

    #[test]
    fn burn_in_bids_are_uniform_on_the_grid() {
        let spec = env(40_000);
        let p = params(
            &spec,
            AgentConfig {
                grid_k: Some(9),
                ..AgentConfig::default()
            },
        );
        let mut agent = RosAgent::<f64>::new(p, 1.0, 4).unwrap();
        let mut counts = [0usize; 10];
        for t in 1..=agent.burn_in_length() {
            let sample = spec.sample_round_at(t).unwrap();
            let log = agent.step(&sample.x);
            counts[(log.bid * 9.0).round() as usize] += 1;
            agent.observe(&Feedback::observe(&sample, log.bid));
        }
        let n = agent.burn_in_length() as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - n / 10.0).powi(2) / (n / 10.0))
            .sum();
        // 99th percentile of χ² with 9 degrees of freedom
        assert!(chi2 < 21.666, "{chi2}");
    }

    #[test]
    fn replay_is_deterministic() {
        let spec = env(300);
        let p = params(&spec, AgentConfig::default());
        let a = run_ros_episode::<f64>(&spec, &p, 9, true).unwrap();
        let b = run_ros_episode::<f64>(&spec, &p, 9, true).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn f32_agent_runs() {
        let spec = env(300);
        let p = params(&spec, AgentConfig::default());
        let (logs, _) = run_ros_episode::<f32>(&spec, &p, 2, false).unwrap();
        assert_eq!(logs.len(), 300);
    }
}
