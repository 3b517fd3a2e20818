//! Incentive pricing for mobile crowdsensing under demand uncertainty.
//!
//! A sensing platform posts a price per mobile user; each user splits a
//! limited resource budget between its own uncertain demand and the
//! platform's task. [`leader::compute_se`] solves the resulting
//! leader/follower game when the users' parameters are known, and
//! [`learner::train`] trains a PPO pricing agent that only observes the
//! history of prices and contributions.

pub mod cli;
pub mod dynamics;
mod error;
pub mod follower;
pub mod gradcheck;
pub mod leader;
pub mod learner;
pub mod model;
pub mod report;
pub mod svg;

pub use error::{Error, Result};

use dynamics::{EnvConfig, Environment};
use learner::{TrainConfig, TrainOutcome};
use model::Scenario;

/// Trains a pricing agent on `scenario`. The environment's starting history
/// is drawn from the training seed.
pub fn train(scenario: &Scenario, env_cfg: &EnvConfig, train_cfg: &TrainConfig) -> Result<TrainOutcome> {
    let mut env = Environment::new(scenario.clone(), env_cfg.clone(), train_cfg.seed)?;
    learner::train(&mut env, train_cfg)
}
