//! Budget-paced agent with predictable stopping. With no budget it runs the
//! unconstrained special case (`γ ≡ 0`).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cdf::{AuctionHistory, SplitCdfEstimate, SplitSampleEstimator};
use crate::env::{EnvironmentSpec, Feedback};
use crate::error::{Error, Result};
use crate::log::{format_context, FallbackReason, Phase, RoundLog};
use crate::params::{AgentParams, BonusScale};
use crate::policy::{
    argmax_first, bid_grid, branch_scores, branch_ucbs, candidate_interval, kappa_br,
    safe_truncate, shadow_price, squarecb_choose, z_threshold, BranchDecision, Mode, ModeParams,
};
use crate::scalar::{convert_slice, Scalar};
use crate::uplift::{ipw_pseudo_outcome, variance_weight, WlsState};

/// Scores and bracket produced by the branch oracle.
#[derive(Debug, Clone)]
pub struct OracleOutput<S> {
    pub l0: Vec<S>,
    pub l1: Vec<S>,
    pub u0: Vec<S>,
    pub u1: Vec<S>,
    pub decision: BranchDecision<S>,
}

impl<S: Scalar> OracleOutput<S> {
    /// Active estimated score `L̂_{i_t}`.
    pub fn active(&self) -> &[S] {
        if self.decision.branch == 1 {
            &self.l1
        } else {
            &self.l0
        }
    }
}

/// Branch oracle on the nominal grid: optimistic scores with shadow price `γ`,
/// their maximizers, the bracket and the branch test.
#[allow(clippy::too_many_arguments)]
pub fn budget_branch_oracle<S: Scalar>(
    grid: &[S],
    f_hat: &[S],
    s: S,
    rho: S,
    epsilon: S,
    gamma: S,
    c_br: S,
    kappa: S,
) -> OracleOutput<S> {
    let a = S::one() + gamma;
    let (l0, l1) = branch_scores(grid, f_hat, s, a);
    let (u0, u1) = branch_ucbs(&l0, &l1, f_hat, rho, epsilon, c_br);
    let decision = candidate_interval(grid, f_hat, &u0, &u1, kappa);
    OracleOutput {
        l0,
        l1,
        u0,
        u1,
        decision,
    }
}

/// Result of asking the agent for a bid.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Bid(Box<RoundLog>),
    Stopped,
}

#[derive(Debug, Clone)]
struct Pending<S> {
    x: Vec<S>,
    bid: S,
    f_hat_bid: S,
    epsilon: S,
}

#[derive(Debug, Clone)]
pub struct BudgetAgent<S: Scalar> {
    params: AgentParams,
    estimator: SplitSampleEstimator<S>,
    history: AuctionHistory<S>,
    wls: WlsState<S>,
    grid: Vec<S>,
    budget: Option<f64>,
    pacing: S,
    mu: S,
    spend: f64,
    kappa: S,
    r0: S,
    rounds: usize,
    stopped_at: Option<usize>,
    rng: ChaCha8Rng,
    pending: Option<Pending<S>>,
}

impl<S: Scalar> BudgetAgent<S> {
    /// `budget = None` gives the unconstrained agent.
    pub fn new(params: AgentParams, budget: Option<f64>, seed: u64) -> Result<Self> {
        if let Some(b) = budget {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::param("budget", format!("must be positive, got {b}")));
            }
            if b > params.horizon as f64 {
                return Err(Error::param("budget", "must not exceed the horizon"));
            }
        }
        let lambda0 = S::of(params.lambda0);
        let estimator = SplitSampleEstimator::with_floor(
            params.dim,
            params.horizon,
            lambda0,
            S::of(params.c_eps),
            params.ridge_floor,
        )?;
        let pacing = budget.map_or(S::zero(), |b| S::of(params.horizon as f64 / b));
        let kappa = kappa_br(S::of(params.density_bound));
        Ok(Self {
            estimator,
            history: AuctionHistory::new(params.dim, lambda0),
            wls: WlsState::new(params.dim, lambda0, params.horizon),
            grid: bid_grid(params.grid_k),
            budget,
            pacing,
            mu: if budget.is_some() {
                S::one()
            } else {
                S::zero()
            },
            spend: 0.0,
            kappa,
            r0: kappa / (S::of(4.0) * (S::one() + pacing)),
            rounds: 0,
            stopped_at: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: None,
            params,
        })
    }

    pub fn mode(&self) -> Mode {
        if self.budget.is_some() {
            Mode::Bgt
        } else {
            Mode::Unc
        }
    }

    pub fn params(&self) -> &AgentParams {
        &self.params
    }

    pub fn mu(&self) -> S {
        self.mu
    }

    pub fn spend(&self) -> f64 {
        self.spend
    }

    pub fn stopped_at(&self) -> Option<usize> {
        self.stopped_at
    }

    pub fn fallback_radius(&self) -> S {
        self.r0
    }

    pub fn wls(&self) -> &WlsState<S> {
        &self.wls
    }

    pub fn history(&self) -> &AuctionHistory<S> {
        &self.history
    }

    pub fn grid(&self) -> &[S] {
        &self.grid
    }

    /// Stopping rule `S_t > B − 1`; uses only data from past rounds.
    pub fn should_stop(&self) -> bool {
        self.stopped_at.is_some() || self.budget.is_some_and(|b| self.spend > b - 1.0)
    }

    fn mode_params(&self) -> ModeParams<S> {
        match self.budget {
            Some(_) => ModeParams::Bgt {
                pacing: self.pacing,
                mu: self.mu,
            },
            None => ModeParams::Unc,
        }
    }

    /// Chooses the bid of round `t = rounds + 1`, or stops.
    pub fn step(&mut self, x: &[f64]) -> Step {
        assert!(self.pending.is_none(), "observe() must follow every bid");
        let t = self.rounds + 1;
        if self.should_stop() {
            self.stopped_at.get_or_insert(t);
            return Step::Stopped;
        }
        let xs: Vec<S> = convert_slice(x);
        let est = self.estimator.estimate(&self.history, &xs, &mut self.rng);
        let beta = self.wls.beta(S::of(self.params.c_beta));
        let (s, rho) = self.wls.predict(&xs, beta);
        let (gamma, _) = shadow_price(&self.mode_params());
        let eps = est.epsilon();
        let z = z_threshold(beta, self.params.dim, self.params.horizon, eps);
        let f_grid: Vec<S> = self.grid.iter().map(|&b| est.eval(b)).collect();
        let c_br = S::of(self.params.c_br)
            * match self.params.bonus_scale {
                BonusScale::ShadowPrice => S::one() + gamma,
                BonusScale::Pacing => S::one() + self.pacing,
            };
        let oracle =
            budget_branch_oracle(&self.grid, &f_grid, s, rho, eps, gamma, c_br, self.kappa);
        let dec = &oracle.decision;

        let mut log = RoundLog::new(t, Phase::Main);
        let planned = if rho > self.r0 {
            log.fallback = true;
            log.fallback_reason = Some(FallbackReason::Radius);
            self.grid[dec.info]
        } else {
            let active = oracle.active();
            let cand = &active[dec.lo..=dec.hi];
            let greedy = dec.lo + argmax_first(cand);
            let mix = squarecb_choose(
                active[greedy],
                active[dec.info],
                S::of(self.params.alpha),
                &mut self.rng,
            );
            log.branch = Some(dec.branch);
            log.p_mix = Some(mix.p.as_f64());
            log.negative_gap = mix.negative_gap;
            log.greedy_bid = Some(self.grid[greedy].as_f64());
            if mix.play_info {
                self.grid[dec.info]
            } else {
                self.grid[greedy]
            }
        };
        log.info_bid = Some(self.grid[dec.info].as_f64());
        log.planned_bid = Some(planned.as_f64());
        let cut = safe_truncate(planned, &est, z);
        let bid = cut.bid;
        let f_hat_bid = est.eval(bid);
        fill_estimates(&mut log, &est, bid, f_hat_bid, s, rho, beta, z);
        log.inverse_crossed = cut.crossed;
        log.unattained = cut.unattained;
        log.dual = self.budget.map(|_| self.mu.as_f64());
        self.pending = Some(Pending {
            x: xs,
            bid,
            f_hat_bid,
            epsilon: eps,
        });
        Step::Bid(Box::new(log))
    }

    /// Absorbs the feedback of the last bid.
    pub fn observe(&mut self, feedback: &Feedback) {
        let p = self
            .pending
            .take()
            .expect("observe() without a pending bid");
        let m = feedback.m;
        let won = p.bid.as_f64() >= m;
        let payment = if won { p.bid.as_f64() } else { 0.0 };
        let y = ipw_pseudo_outcome(p.f_hat_bid, p.epsilon, won, S::of(feedback.v_observed));
        self.wls
            .update(&p.x, variance_weight(p.f_hat_bid), y, p.epsilon);
        self.spend += payment;
        if let Some(b) = self.budget {
            let pace = b / self.params.horizon as f64;
            let step = S::of(self.params.eta * (payment - pace));
            self.mu = (self.mu * step.exp()).clamp01();
        }
        self.history.push(&p.x, S::of(m));
        self.rounds += 1;
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn fill_estimates<S: Scalar>(
    log: &mut RoundLog,
    est: &SplitCdfEstimate<S>,
    bid: S,
    f_hat_bid: S,
    s: S,
    rho: S,
    beta: S,
    z: S,
) {
    log.bid = bid.as_f64();
    log.f_hat_bid = f_hat_bid.as_f64();
    log.s_hat = s.as_f64();
    log.rho = rho.as_f64();
    log.beta = beta.as_f64();
    log.z = z.as_f64();
    log.epsilon = est.epsilon().as_f64();
    log.eval_size = est.eval_points().len();
    log.max_jump = est.max_jump().as_f64();
    log.warm_start = est.is_warm_start();
}

/// Fills the outcome and environment-truth columns of a round log.
pub(crate) fn settle_round(
    log: &mut RoundLog,
    spec: &EnvironmentSpec,
    sample: &crate::env::RoundSample,
    cumulative_spend: f64,
    record_x: bool,
) {
    let b = log.bid;
    log.m = sample.m;
    log.won = b >= sample.m;
    log.payment = if log.won { b } else { 0.0 };
    log.realized_reward = if log.won {
        sample.v1 - sample.v0 - b
    } else {
        0.0
    };
    log.expected_reward = spec.expected_reward(&sample.x, b);
    log.expected_margin = spec.expected_margin(&sample.x, b);
    log.true_uplift = spec.uplift(&sample.x);
    log.cumulative_spend = cumulative_spend;
    if record_x {
        log.x = format_context(&sample.x);
    }
}

/// Drives a Budget (or, with `budget = None`, unconstrained) agent over the
/// environment's episode. Rounds stop at the predictable stopping time.
pub fn run_budget_episode<S: Scalar>(
    spec: &EnvironmentSpec,
    params: &AgentParams,
    budget: Option<f64>,
    agent_seed: u64,
    record_x: bool,
) -> Result<Vec<RoundLog>> {
    let mut agent = BudgetAgent::<S>::new(*params, budget, agent_seed)?;
    let mut logs = Vec::with_capacity(spec.horizon());
    for t in 1..=spec.horizon() {
        if agent.should_stop() {
            agent.step(&[]);
            break;
        }
        let sample = spec.sample_round_at(t)?;
        let Step::Bid(mut log) = agent.step(&sample.x) else {
            unreachable!("stop was checked before the step");
        };
        let fb = Feedback::observe(&sample, log.bid);
        agent.observe(&fb);
        settle_round(&mut log, spec, &sample, agent.spend(), record_x);
        logs.push(*log);
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ContextLaw, NoiseModel};
    use crate::params::AgentConfig;

    fn env(horizon: usize) -> EnvironmentSpec {
        EnvironmentSpec::new(
            vec![0.5, 0.5, 0.5],
            vec![0.2, 0.2, 0.2],
            ContextLaw::SpherePositive { dimension: 3 },
            NoiseModel::gaussian(0.25).unwrap(),
            horizon,
            1.0,
            11,
        )
        .unwrap()
    }

    fn params(spec: &EnvironmentSpec, cfg: AgentConfig) -> AgentParams {
        cfg.resolve(spec.horizon(), spec.dimension(), spec.noise().density_bound)
            .unwrap()
    }

    #[test]
    fn pacing_dual_update_examples() {
        let spec = env(16);
        let cfg = AgentConfig {
            eta: Some(0.1),
            ..AgentConfig::default()
        };
        let mut a = BudgetAgent::<f64>::new(params(&spec, cfg), Some(4.0), 0).unwrap();
        a.mu = 0.5;
        a.pending = Some(Pending {
            x: vec![1.0, 0.0, 0.0],
            bid: 1.0,
            f_hat_bid: 0.5,
            epsilon: 1.0,
        });
        a.observe(&Feedback {
            m: 0.3,
            v_observed: 1.0,
        });
        assert!((a.mu - 0.5 * 0.075f64.exp()).abs() < 1e-12);
        assert!((a.mu - 0.5389).abs() < 1e-4);
        // losing relaxes the dual
        let before = a.mu;
        a.pending = Some(Pending {
            x: vec![1.0, 0.0, 0.0],
            bid: 0.1,
            f_hat_bid: 0.5,
            epsilon: 1.0,
        });
        a.observe(&Feedback {
            m: 0.3,
            v_observed: 0.0,
        });
        assert!(a.mu < before);
        // projection at the ceiling
        a.mu = 1.0;
        a.pending = Some(Pending {
            x: vec![1.0, 0.0, 0.0],
            bid: 1.0,
            f_hat_bid: 0.5,
            epsilon: 1.0,
        });
        a.observe(&Feedback {
            m: 0.3,
            v_observed: 1.0,
        });
        assert_eq!(a.mu, 1.0);
        assert_eq!(a.spend(), 2.0);
    }

    #[test]
    fn stops_once_spend_exceeds_reserve() {
        let spec = env(100);
        let mut a =
            BudgetAgent::<f64>::new(params(&spec, AgentConfig::default()), Some(10.0), 0).unwrap();
        a.spend = 10.0;
        assert_eq!(a.step(&[1.0, 0.0, 0.0]), Step::Stopped);
        assert_eq!(a.stopped_at(), Some(1));
        // tiny budgets stop before the first bid
        let b =
            BudgetAgent::<f64>::new(params(&spec, AgentConfig::default()), Some(0.5), 0).unwrap();
        assert!(b.should_stop());
        let logs = run_budget_episode::<f64>(
            &spec,
            &params(&spec, AgentConfig::default()),
            Some(0.5),
            0,
            false,
        )
        .unwrap();
        assert!(logs.is_empty());
    }

    #[test]
    fn zero_shadow_price_oracle_is_unconstrained() {
        let grid = bid_grid::<f64>(20);
        let f: Vec<f64> = grid.iter().map(|b| (b * 1.3f64).min(1.0)).collect();
        let with_budget = budget_branch_oracle(&grid, &f, 0.6, 0.1, 0.05, 0.0, 1.0, 0.25);
        let (l0, l1) = branch_scores(&grid, &f, 0.6, 1.0);
        let (u0, u1) = branch_ucbs(&l0, &l1, &f, 0.1, 0.05, 1.0);
        assert_eq!(
            with_budget.decision,
            candidate_interval(&grid, &f, &u0, &u1, 0.25)
        );
    }

    #[test]
    fn unprofitable_value_pins_bids_at_zero() {
        let grid = bid_grid::<f64>(10);
        let f: Vec<f64> = grid.iter().map(|b| 0.1 + 0.8 * b).collect();
        let out = budget_branch_oracle(&grid, &f, -2.0, 0.0, 0.0, 0.5, 1.0, 0.25);
        assert_eq!((out.decision.b_star_0, out.decision.b_star_1), (0.0, 0.0));
    }

    #[test]
    fn exact_scores_bracket_their_maximizers() {
        let grid = bid_grid::<f64>(10);
        let f: Vec<f64> = grid
            .iter()
            .map(|b| (0.5 + (b - 0.4) * 1.5f64).clamp(0.0, 1.0))
            .collect();
        let out = budget_branch_oracle(&grid, &f, 0.8, 0.0, 0.0, 0.2, 1.0, 0.25);
        let scan = |v: &[f64]| grid[argmax_first(v)];
        assert_eq!(out.decision.b_star_1, scan(&out.l1));
        assert_eq!(
            out.decision.candidates(&grid).first(),
            out.decision.candidates(&grid).last()
        );
    }

    #[test]
    fn fallback_plays_information_bid() {
        let spec = env(400);
        let p = params(&spec, AgentConfig::default());
        let mut agent = BudgetAgent::<f64>::new(p, Some(200.0), 3).unwrap();
        let mut fallbacks = 0;
        for t in 1..=120 {
            let sample = spec.sample_round_at(t).unwrap();
            let Step::Bid(log) = agent.step(&sample.x) else {
                panic!()
            };
            if log.fallback {
                assert_eq!(log.planned_bid, log.info_bid);
                fallbacks += 1;
            }
            agent.observe(&Feedback::observe(&sample, log.bid));
        }
        assert!(fallbacks > 0);
    }

    #[test]
    fn hard_budget_and_dual_bounds() {
        let spec = env(1500);
        let p = params(
            &spec,
            AgentConfig {
                c_eps: 0.05,
                c_beta: 0.1,
                ..AgentConfig::default()
            },
        );
        for seed in 0..3 {
            let budget = 1500.0 / 8.0;
            let logs = run_budget_episode::<f64>(&spec, &p, Some(budget), seed, false).unwrap();
            let total: f64 = logs.iter().map(|l| l.payment).sum();
            assert!(total <= budget);
            assert!(logs.iter().all(|l| (0.0..=1.0).contains(&l.dual.unwrap())));
        }
    }

    #[test]
    fn unlimited_budget_matches_unconstrained_agent() {
        let spec = env(300);
        let p = params(&spec, AgentConfig::default());
        let unc = run_budget_episode::<f64>(&spec, &p, None, 5, true).unwrap();
        let again = run_budget_episode::<f64>(&spec, &p, None, 5, true).unwrap();
        assert_eq!(unc, again);
        assert_eq!(unc.len(), 300);
    }

    #[test]
    fn predictable_stopping_ignores_current_round() {
        let spec = env(200);
        let p = params(
            &spec,
            AgentConfig {
                c_eps: 0.05,
                c_beta: 0.1,
                ..AgentConfig::default()
            },
        );
        let mut agent = BudgetAgent::<f64>::new(p, Some(5.0), 1).unwrap();
        for t in 1..=200 {
            let decide = agent.should_stop();
            let clone = agent.clone();
            // a different round-t context cannot change whether round t runs
            let mut alt = clone.clone();
            let alt_step = alt.step(&[0.0, 0.0, 1.0]);
            let sample = spec.sample_round_at(t).unwrap();
            match agent.step(&sample.x) {
                Step::Stopped => {
                    assert!(decide);
                    assert_eq!(alt_step, Step::Stopped);
                    break;
                }
                Step::Bid(log) => {
                    assert!(!decide && alt_step != Step::Stopped);
                    agent.observe(&Feedback::observe(&sample, log.bid));
                }
            }
        }
        assert!(agent.spend() <= 5.0);
    }

    #[test]
    fn f32_agent_runs() {
        let spec = env(200);
        let p = params(&spec, AgentConfig::default());
        let logs = run_budget_episode::<f32>(&spec, &p, Some(100.0), 2, false).unwrap();
        assert!(!logs.is_empty());
        assert!(logs.iter().all(|l| (0.0..=1.0).contains(&l.bid)));
    }
}
