//! Repeated pricing game seen as a Markov decision process.
//!
//! The state is the last `L` rounds of (prices, allocations). Followers are
//! myopic best responders, so the transition given a state and an action is
//! deterministic: the new round is appended and the oldest one dropped. The
//! reward is the platform payoff times `reward_scale`.
//!
//! The learner talks to the game only through [`PricingEnvironment`], which
//! exposes observations and rewards and nothing about the users.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::follower::best_responses;
use crate::model::{mu_payoff, sp_payoff, PriceProfile, Scenario};
use crate::report::{fmt_num, indexed, push_nums};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Rounds of history in the state.
    pub history_len: usize,
    pub reward_scale: f64,
    /// Public cap on posted prices; actions are clamped into `[0, p_max]`.
    pub p_max: f64,
    /// Steps per evaluation episode.
    pub episode_length: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            history_len: 2,
            reward_scale: 0.01,
            p_max: 1.0,
            episode_length: 128,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_len == 0 || self.episode_length == 0 {
            return Err(Error::config("history_len and episode_length must be >= 1"));
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return Err(Error::config("reward_scale must be positive"));
        }
        if !(self.p_max > 0.0 && self.p_max.is_finite()) {
            return Err(Error::config("p_max must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub prices: Vec<f64>,
    pub allocations: Vec<f64>,
}

/// The last `L` rounds, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    rounds: VecDeque<Round>,
}

impl GameState {
    pub fn rounds(&self) -> impl ExactSizeIterator<Item = &Round> {
        self.rounds.iter()
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn newest(&self) -> &Round {
        self.rounds.back().expect("state always holds at least one round")
    }

    /// `[p(t-L), x(t-L), ..., p(t-1), x(t-1)]`, length `2 N L`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for r in &self.rounds {
            out.extend_from_slice(&r.prices);
            out.extend_from_slice(&r.allocations);
        }
        out
    }

    fn advanced(&self, round: Round) -> GameState {
        let mut rounds = self.rounds.clone();
        rounds.pop_front();
        rounds.push_back(round);
        GameState { rounds }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: GameState,
    /// Action actually applied, after clamping.
    pub action: Vec<f64>,
    pub allocations: Vec<f64>,
    pub reward: f64,
    pub next_state: GameState,
    pub sp_payoff: f64,
    pub mu_payoffs: Vec<f64>,
    /// Whether any component of the requested action was clamped.
    pub clamped: bool,
}

impl Transition {
    pub fn csv_header(n: usize) -> Vec<String> {
        let mut h = vec!["episode".to_string(), "step".to_string()];
        h.extend(indexed("p", n));
        h.extend(indexed("x", n));
        h.push("sp_payoff".into());
        h.push("reward".into());
        h.extend(indexed("mu_payoff", n));
        h.push("clamped_flag".into());
        h
    }

    pub fn csv_row(&self, episode: usize, step: usize) -> Vec<String> {
        let mut row = vec![episode.to_string(), step.to_string()];
        push_nums(&mut row, &self.action);
        push_nums(&mut row, &self.allocations);
        row.push(fmt_num(self.sp_payoff));
        row.push(fmt_num(self.reward));
        push_nums(&mut row, &self.mu_payoffs);
        row.push(u8::from(self.clamped).to_string());
        row
    }
}

fn round_for(scenario: &Scenario, prices: Vec<f64>) -> Result<Round> {
    let allocations = best_responses(scenario.mus(), &prices)?
        .iter()
        .map(|r| r.x_star)
        .collect();
    Ok(Round { prices, allocations })
}

/// Initial state: `L` rounds of uniformly random prices on `[0, p_max]`
/// together with the users' responses to them.
pub fn env_reset<R: Rng + ?Sized>(scenario: &Scenario, cfg: &EnvConfig, rng: &mut R) -> Result<GameState> {
    cfg.validate()?;
    let mut rounds = VecDeque::with_capacity(cfg.history_len);
    for _ in 0..cfg.history_len {
        let prices = random_policy(scenario.len(), cfg, rng).into_inner();
        rounds.push_back(round_for(scenario, prices)?);
    }
    Ok(GameState { rounds })
}

/// Initial state whose every round posts `prices`.
pub fn env_reset_with_prices(scenario: &Scenario, cfg: &EnvConfig, prices: &[f64]) -> Result<GameState> {
    cfg.validate()?;
    Error::check_len(scenario.len(), prices.len())?;
    let (prices, _) = clamp_action(prices, cfg.p_max);
    let round = round_for(scenario, prices)?;
    Ok(GameState {
        rounds: std::iter::repeat_n(round, cfg.history_len).collect(),
    })
}

/// Clamps into `[0, p_max]`; NaN maps to 0.
fn clamp_action(action: &[f64], p_max: f64) -> (Vec<f64>, bool) {
    let mut clamped = false;
    let out = action
        .iter()
        .map(|&a| {
            let c = if a.is_nan() { 0.0 } else { a.clamp(0.0, p_max) };
            if c != a {
                clamped = true;
            }
            c
        })
        .collect();
    (out, clamped)
}

/// Plays one round. Out-of-range actions are clamped and flagged, never rejected.
pub fn env_step(scenario: &Scenario, cfg: &EnvConfig, state: &GameState, action: &[f64]) -> Result<Transition> {
    Error::check_len(scenario.len(), action.len())?;
    let (prices, clamped) = clamp_action(action, cfg.p_max);
    let round = round_for(scenario, prices)?;
    let sp = sp_payoff(&round.allocations, &round.prices, scenario.lambda())?;
    let mu_payoffs = scenario
        .mus()
        .iter()
        .zip(round.allocations.iter().zip(&round.prices))
        .map(|(mu, (&x, &p))| mu_payoff(mu, x, p))
        .collect::<Result<Vec<_>>>()?;
    Ok(Transition {
        state: state.clone(),
        action: round.prices.clone(),
        allocations: round.allocations.clone(),
        reward: cfg.reward_scale * sp,
        next_state: state.advanced(round),
        sp_payoff: sp,
        mu_payoffs,
        clamped,
    })
}

/// Constant maximal pricing, `p_n = p_max`.
pub fn greedy_policy(n: usize, cfg: &EnvConfig) -> PriceProfile {
    PriceProfile::new(vec![cfg.p_max; n]).expect("p_max is validated positive")
}

/// Independent uniform prices on `[0, p_max]`.
pub fn random_policy<R: Rng + ?Sized>(n: usize, cfg: &EnvConfig, rng: &mut R) -> PriceProfile {
    let p = (0..n).map(|_| cfg.p_max * rng.random::<f64>()).collect();
    PriceProfile::new(p).expect("draws are finite and non-negative")
}

/// Non-learning pricing rules used as comparison anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Greedy,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutSummary {
    pub mean_sp_payoff: f64,
    pub mean_reward: f64,
    pub mean_mu_payoffs: Vec<f64>,
    pub mean_prices: Vec<f64>,
    pub mean_allocations: Vec<f64>,
}

fn summarize(transitions: &[Transition]) -> RolloutSummary {
    let k = transitions.len().max(1) as f64;
    let n = transitions.first().map_or(0, |t| t.action.len());
    let mut s = RolloutSummary {
        mean_sp_payoff: 0.0,
        mean_reward: 0.0,
        mean_mu_payoffs: vec![0.0; n],
        mean_prices: vec![0.0; n],
        mean_allocations: vec![0.0; n],
    };
    for t in transitions {
        s.mean_sp_payoff += t.sp_payoff;
        s.mean_reward += t.reward;
        for i in 0..n {
            s.mean_mu_payoffs[i] += t.mu_payoffs[i];
            s.mean_prices[i] += t.action[i];
            s.mean_allocations[i] += t.allocations[i];
        }
    }
    s.mean_sp_payoff /= k;
    s.mean_reward /= k;
    for v in s
        .mean_mu_payoffs
        .iter_mut()
        .chain(&mut s.mean_prices)
        .chain(&mut s.mean_allocations)
    {
        *v /= k;
    }
    s
}

/// Plays `steps` rounds of a baseline from a fresh random state.
pub fn rollout_baseline(
    scenario: &Scenario,
    cfg: &EnvConfig,
    baseline: Baseline,
    steps: usize,
    seed: u64,
) -> Result<(RolloutSummary, Vec<Transition>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env_reset(scenario, cfg, &mut rng)?;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let action = match baseline {
            Baseline::Greedy => greedy_policy(scenario.len(), cfg),
            Baseline::Random => random_policy(scenario.len(), cfg, &mut rng),
        };
        let t = env_step(scenario, cfg, &state, &action)?;
        state = t.next_state.clone();
        out.push(t);
    }
    Ok((summarize(&out), out))
}

/// Plays a fixed price vector for `steps` rounds.
pub fn rollout_fixed(scenario: &Scenario, cfg: &EnvConfig, prices: &[f64], steps: usize) -> Result<(RolloutSummary, Vec<Transition>)> {
    let mut state = env_reset_with_prices(scenario, cfg, prices)?;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let t = env_step(scenario, cfg, &state, prices)?;
        state = t.next_state.clone();
        out.push(t);
    }
    Ok((summarize(&out), out))
}

/// What a pricing agent gets back after posting prices.
#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Platform payoff of the round (the agent's own, unscaled reward).
    pub sp_payoff: f64,
    pub applied_action: Vec<f64>,
    /// Contributions the users made this round, as observed by the platform.
    pub observed_allocations: Vec<f64>,
    pub clamped: bool,
}

/// The interface a pricing agent trains against. It carries no user parameters.
pub trait PricingEnvironment {
    fn num_prices(&self) -> usize;
    fn observation_dim(&self) -> usize;
    fn price_cap(&self) -> f64;
    /// Current observation.
    fn observe(&self) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<Feedback>;
}

/// Stateful game environment owning its scenario and random stream.
pub struct Environment {
    scenario: Scenario,
    cfg: EnvConfig,
    state: GameState,
    log: Option<Vec<Transition>>,
}

impl Environment {
    /// Starts from a random history drawn from `seed`.
    pub fn new(scenario: Scenario, cfg: EnvConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = env_reset(&scenario, &cfg, &mut rng)?;
        Ok(Environment {
            scenario,
            cfg,
            state,
            log: None,
        })
    }

    /// Keep every transition for later export.
    pub fn record_transitions(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn take_log(&mut self) -> Vec<Transition> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }
}

impl PricingEnvironment for Environment {
    fn num_prices(&self) -> usize {
        self.scenario.len()
    }

    fn observation_dim(&self) -> usize {
        2 * self.scenario.len() * self.cfg.history_len
    }

    fn price_cap(&self) -> f64 {
        self.cfg.p_max
    }

    fn observe(&self) -> Vec<f64> {
        self.state.flatten()
    }

    fn step(&mut self, action: &[f64]) -> Result<Feedback> {
        let t = env_step(&self.scenario, &self.cfg, &self.state, action)?;
        self.state = t.next_state.clone();
        let fb = Feedback {
            observation: self.state.flatten(),
            reward: t.reward,
            sp_payoff: t.sp_payoff,
            applied_action: t.action.clone(),
            observed_allocations: t.allocations.clone(),
            clamped: t.clamped,
        };
        if let Some(log) = self.log.as_mut() {
            log.push(t);
        }
        Ok(fb)
    }
}
