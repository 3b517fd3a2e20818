//! PPO pricing agent trained purely from game history.
//!
//! Per episode the agent clears its buffer, plays `D` rounds carrying the
//! game state over from the previous episode, and then runs `M` epochs of
//! plain gradient steps: ascent on the clipped surrogate for the actor
//! (including the log standard deviations) and descent on the squared
//! critic error. The agent sees only [`PricingEnvironment`] observations and
//! rewards.

mod checkpoint;
mod mlp;
mod policy;
mod ppo;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::PricingEnvironment;
use crate::error::{Error, Result};
use crate::report::{fmt_num, indexed, push_nums};

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use mlp::{mlp_backward, Dense, MlpCache, MlpGrads, MlpParams, OutputHead};
pub use policy::{
    gaussian_log_density, gaussian_log_density_grad, ActorGrads, ObservationStats, PolicyParams, LOG_STD_MAX,
    LOG_STD_MIN, OBS_CLIP,
};
pub use ppo::{
    advantage_estimates, clip_ratio, clipped_objective, critic_loss_and_gradient, ppo_actor_gradient,
    value_targets, StepRecord, TrajectoryBuffer,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Clip half-width of the probability ratio.
    pub epsilon: f64,
    /// Steps per update (`D`).
    pub batch_steps: usize,
    /// Update epochs per batch (`M`).
    pub epochs: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub episodes: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub log_std_init: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.9,
            epsilon: 0.2,
            batch_steps: 128,
            epochs: 10,
            actor_lr: 3e-4,
            critic_lr: 3e-5,
            episodes: 500,
            seed: 0,
            hidden: vec![64, 64],
            log_std_init: -0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::config(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.batch_steps == 0 || self.epochs == 0 || self.episodes == 0 {
            return Err(Error::config("batch_steps, epochs and episodes must be >= 1"));
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return Err(Error::config("learning rates must be positive"));
        }
        if self.hidden.iter().any(|h| *h == 0) {
            return Err(Error::config("hidden layer widths must be >= 1"));
        }
        if !self.log_std_init.is_finite() {
            return Err(Error::config("log_std_init must be finite"));
        }
        Ok(())
    }
}

/// Per-episode training statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeTrace {
    pub episode: usize,
    pub mean_reward: f64,
    pub mean_sp_payoff: f64,
    /// Clipped surrogate before the first update epoch.
    pub actor_objective: f64,
    /// Critic loss before the first and before the last update epoch.
    pub critic_loss_first: f64,
    pub critic_loss_last: f64,
    pub mean_log_std: f64,
    pub mean_prices: Vec<f64>,
    pub mean_allocations: Vec<f64>,
}

impl EpisodeTrace {
    pub fn csv_header(n: usize) -> Vec<String> {
        let mut h: Vec<String> = [
            "episode",
            "mean_reward",
            "mean_sp_payoff",
            "actor_objective",
            "critic_loss_first",
            "critic_loss_last",
            "mean_log_std",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend(indexed("mean_p", n));
        h.extend(indexed("mean_x", n));
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut row = vec![self.episode.to_string()];
        push_nums(
            &mut row,
            &[
                self.mean_reward,
                self.mean_sp_payoff,
                self.actor_objective,
                self.critic_loss_first,
                self.critic_loss_last,
                self.mean_log_std,
            ],
        );
        push_nums(&mut row, &self.mean_prices);
        push_nums(&mut row, &self.mean_allocations);
        row
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: PolicyParams,
    pub trace: Vec<EpisodeTrace>,
}

/// Builds a fresh policy sized for `env`.
pub fn init_policy<E: PricingEnvironment + ?Sized>(env: &E, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> PolicyParams {
    PolicyParams::new(
        env.observation_dim(),
        env.num_prices(),
        &cfg.hidden,
        env.price_cap(),
        cfg.log_std_init,
        rng,
    )
}

/// One round of `M` update epochs on a full buffer. Returns the surrogate
/// and critic loss before the first epoch and the critic loss before the last.
pub fn update_policy(
    policy: &mut PolicyParams,
    buffer: &TrajectoryBuffer,
    cfg: &TrainConfig,
) -> Result<(f64, f64, f64)> {
    let (actor_lr, critic_lr) = (cfg.actor_lr, cfg.critic_lr);
    let mut first = None;
    let mut last_critic = 0.0;
    for _ in 0..cfg.epochs {
        let (objective, actor_grad) = ppo_actor_gradient(policy, buffer, cfg.epsilon, cfg.gamma)?;
        let (critic_loss, critic_grad) = critic_loss_and_gradient(policy, buffer, cfg.gamma)?;
        if first.is_none() {
            first = Some((objective, critic_loss));
        }
        last_critic = critic_loss;
        policy.actor.add_scaled(&actor_grad.actor, actor_lr);
        for (ls, g) in policy.log_std.iter_mut().zip(&actor_grad.log_std) {
            *ls += actor_lr * g;
        }
        policy.clamp_log_std();
        policy.critic.add_scaled(&critic_grad, -critic_lr);
    }
    let (objective, critic_first) = first.expect("epochs >= 1");
    Ok((objective, critic_first, last_critic))
}

/// Runs the full episode loop against `env`.
pub fn train<E: PricingEnvironment + ?Sized>(env: &mut E, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = init_policy(env, cfg, &mut rng);
    let n = env.num_prices();
    let mut buffer = TrajectoryBuffer::new(cfg.batch_steps);
    let mut trace = Vec::with_capacity(cfg.episodes);
    let mut obs = env.observe();
    let mut obs_stats = ObservationStats::new(obs.len());
    obs_stats.push(&obs);
    obs_stats.apply(&mut policy);

    for episode in 0..cfg.episodes {
        buffer.clear();
        let mut sum_reward = 0.0;
        let mut sum_payoff = 0.0;
        let mut sum_prices = vec![0.0; n];
        let mut sum_alloc = vec![0.0; n];
        for _ in 0..cfg.batch_steps {
            let (action, log_prob) = policy.sample(&obs, &mut rng)?;
            let value = policy.value(&obs)?;
            let fb = env.step(&action)?;
            buffer.push(StepRecord {
                state: std::mem::replace(&mut obs, fb.observation),
                action,
                log_prob,
                reward: fb.reward,
                value,
            })?;
            obs_stats.push(&obs);
            sum_reward += fb.reward;
            sum_payoff += fb.sp_payoff;
            for (acc, p) in sum_prices.iter_mut().zip(&fb.applied_action) {
                *acc += p;
            }
            for (acc, x) in sum_alloc.iter_mut().zip(&fb.observed_allocations) {
                *acc += x;
            }
        }
        buffer.set_bootstrap(policy.value(&obs)?);

        let (actor_objective, critic_loss_first, critic_loss_last) = update_policy(&mut policy, &buffer, cfg)?;
        // Refreshed only between episodes so the stored behaviour log-densities stay valid.
        obs_stats.apply(&mut policy);
        if !policy.all_finite() {
            return Err(Error::Diverged {
                episode,
                message: "non-finite parameter after update".into(),
                snapshot: Box::new(policy),
            });
        }

        let k = cfg.batch_steps as f64;
        trace.push(EpisodeTrace {
            episode,
            mean_reward: sum_reward / k,
            mean_sp_payoff: sum_payoff / k,
            actor_objective,
            critic_loss_first,
            critic_loss_last,
            mean_log_std: policy.log_std.iter().sum::<f64>() / n as f64,
            mean_prices: sum_prices.iter().map(|v| v / k).collect(),
            mean_allocations: sum_alloc.iter().map(|v| v / k).collect(),
        });
    }
    Ok(TrainOutcome { policy, trace })
}

/// Mean platform payoff of the last `window` episodes.
pub fn tail_mean_payoff(trace: &[EpisodeTrace], window: usize) -> f64 {
    let tail = &trace[trace.len().saturating_sub(window)..];
    tail.iter().map(|t| t.mean_sp_payoff).sum::<f64>() / tail.len().max(1) as f64
}

/// One-line summary of the network shapes and log standard deviations.
pub fn describe_policy(policy: &PolicyParams) -> String {
    format!(
        "actor {:?}, critic {:?}, log_std [{}]",
        policy.actor.sizes(),
        policy.critic.sizes(),
        policy.log_std.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(", ")
    )
}
