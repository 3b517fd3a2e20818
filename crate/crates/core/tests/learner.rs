use std::fs;
use std::path::Path;

use crowdprice::cli::{generate_scenario, GenerationSpec};
use crowdprice::dynamics::{EnvConfig, Environment, Feedback, PricingEnvironment};
use crowdprice::gradcheck::{central_difference, relative_error};
use crowdprice::learner::{
    advantage_estimates, clipped_objective, critic_loss_and_gradient, gaussian_log_density, init_policy,
    ppo_actor_gradient, read_checkpoint, train, write_checkpoint, ObservationStats, PolicyParams, StepRecord,
    TrainConfig, TrajectoryBuffer,
};
use crowdprice::Result;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random policy and full buffer. `log_prob_shift` moves the behaviour
/// log-densities away from the current policy so ratios leave the clip band.
fn toy(seed: u64, obs: usize, n: usize, d: usize, log_prob_shift: f64) -> (PolicyParams, TrajectoryBuffer) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = PolicyParams::new(obs, n, &[6, 5], 1.0, -0.7, &mut rng);
    policy.actor = crowdprice::learner::MlpParams::init(
        &[obs, 6, 5, n],
        crowdprice::learner::OutputHead::ScaledSigmoid { scale: 1.0 },
        1.0,
        &mut rng,
    );
    policy.obs_shift = (0..obs).map(|_| rng.random_range(-1.0..1.0)).collect();
    policy.obs_scale = (0..obs).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut buffer = TrajectoryBuffer::new(d);
    for _ in 0..d {
        let state: Vec<f64> = (0..obs).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mean = policy.mean(&state).unwrap();
        let action: Vec<f64> = mean.iter().map(|m| m + rng.random_range(-0.4..0.4)).collect();
        let log_prob = gaussian_log_density(&mean, &policy.log_std, &action)
            + log_prob_shift * rng.random_range(-1.0..1.0);
        buffer
            .push(StepRecord {
                state,
                action,
                log_prob,
                reward: rng.random_range(-1.0..2.0),
                value: rng.random_range(0.0..1.0),
            })
            .unwrap();
    }
    buffer.set_bootstrap(rng.random_range(0.0..1.0));
    (policy, buffer)
}

fn actor_theta(policy: &PolicyParams) -> Vec<f64> {
    let mut t = policy.actor.flat();
    t.extend_from_slice(&policy.log_std);
    t
}

fn with_actor_theta(policy: &PolicyParams, theta: &[f64]) -> PolicyParams {
    let mut p = policy.clone();
    let k = theta.len() - p.log_std.len();
    p.actor.set_flat(&theta[..k]).unwrap();
    p.log_std.copy_from_slice(&theta[k..]);
    p
}

/// Smallest distance of any ratio from a clip kink.
fn kink_distance(policy: &PolicyParams, buffer: &TrajectoryBuffer, eps: f64) -> f64 {
    buffer
        .records()
        .iter()
        .map(|r| {
            let mean = policy.mean(&r.state).unwrap();
            let ratio = (gaussian_log_density(&mean, &policy.log_std, &r.action) - r.log_prob).exp();
            (ratio - (1.0 - eps)).abs().min((ratio - (1.0 + eps)).abs())
        })
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn actor_gradient_matches_finite_differences(
        seed in any::<u64>(), obs in 1usize..5, n in 1usize..4, gamma in prop_oneof![Just(1.0), 0.5..1.0f64],
    ) {
        let eps = 0.2;
        let (policy, buffer) = toy(seed, obs, n, 6, 0.5);
        prop_assume!(kink_distance(&policy, &buffer, eps) > 1e-3);
        let (_, g) = ppo_actor_gradient(&policy, &buffer, eps, gamma).unwrap();
        let mut analytic = g.actor.flat();
        analytic.extend_from_slice(&g.log_std);
        let numeric = central_difference(&actor_theta(&policy), 1e-6, |t| {
            clipped_objective(&with_actor_theta(&policy, t), &buffer, eps, gamma)
        })
        .unwrap();
        let err = relative_error(&analytic, &numeric);
        prop_assert!(err <= 1e-4, "rel err {}", err);
    }

    #[test]
    fn critic_gradient_matches_finite_differences(seed in any::<u64>(), obs in 1usize..5, gamma in 0.5..1.0f64) {
        let (policy, buffer) = toy(seed, obs, 2, 6, 0.0);
        let (_, g) = critic_loss_and_gradient(&policy, &buffer, gamma).unwrap();
        let numeric = central_difference(&policy.critic.flat(), 1e-6, |t| {
            let mut p = policy.clone();
            p.critic.set_flat(t)?;
            Ok(critic_loss_and_gradient(&p, &buffer, gamma)?.0)
        })
        .unwrap();
        let err = relative_error(&g.flat(), &numeric);
        prop_assert!(err <= 1e-4, "rel err {}", err);
    }

    #[test]
    fn unit_ratio_makes_clipping_inert(seed in any::<u64>(), obs in 1usize..5, n in 1usize..4, eps in 0.05..0.5f64) {
        let (policy, buffer) = toy(seed, obs, n, 8, 0.0);
        let unclipped: f64 = advantage_estimates(&buffer, 0.9).unwrap().iter().sum();
        let clipped = clipped_objective(&policy, &buffer, eps, 0.9).unwrap();
        prop_assert!((clipped - unclipped).abs() <= 1e-12 * (1.0 + unclipped.abs()));
    }

    #[test]
    fn checkpoint_round_trips(seed in any::<u64>(), obs in 1usize..5, n in 1usize..4) {
        let (policy, _) = toy(seed, obs, n, 1, 0.0);
        let (back, echo) = read_checkpoint(&write_checkpoint(&policy, "{\"k\":1}")).unwrap();
        prop_assert_eq!(back, policy);
        prop_assert_eq!(echo, "{\"k\":1}");
    }
}

fn environment(seed: u64) -> Environment {
    let scenario = generate_scenario(&GenerationSpec::default(), seed).unwrap();
    Environment::new(scenario, EnvConfig::default(), seed).unwrap()
}

/// A batch collected the way training collects it, with fitted normalisation.
fn rollout_batch(seed: u64, cfg: &TrainConfig) -> (PolicyParams, TrajectoryBuffer) {
    let mut env = environment(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = init_policy(&env, cfg, &mut rng);
    let mut stats = ObservationStats::new(env.observation_dim());
    let mut buffer = TrajectoryBuffer::new(cfg.batch_steps);
    let mut obs = env.observe();
    stats.push(&obs);
    for _ in 0..cfg.batch_steps {
        let (action, log_prob) = policy.sample(&obs, &mut rng).unwrap();
        let fb = env.step(&action).unwrap();
        stats.push(&fb.observation);
        let state = std::mem::replace(&mut obs, fb.observation);
        buffer
            .push(StepRecord {
                value: policy.value(&state).unwrap(),
                state,
                action,
                log_prob,
                reward: fb.reward,
            })
            .unwrap();
    }
    stats.apply(&mut policy);
    buffer.set_bootstrap(policy.value(&obs).unwrap());
    (policy, buffer)
}

#[test]
fn critic_loss_does_not_increase_at_a_tenth_of_the_learning_rate() {
    let cfg = TrainConfig::default();
    let lr = cfg.critic_lr / 10.0;
    for seed in 0..3 {
        let (mut policy, buffer) = rollout_batch(seed, &cfg);
        let mut prev = f64::INFINITY;
        for epoch in 0..cfg.epochs {
            let (loss, grad) = critic_loss_and_gradient(&policy, &buffer, cfg.gamma).unwrap();
            assert!(loss <= prev, "seed {seed} epoch {epoch}: {loss} > {prev}");
            prev = loss;
            policy.critic.add_scaled(&grad, -lr);
        }
    }
}

#[test]
fn buffer_holds_exactly_its_capacity() {
    let cfg = TrainConfig {
        batch_steps: 5,
        ..TrainConfig::default()
    };
    let (_, mut buffer) = rollout_batch(1, &cfg);
    assert!(buffer.is_full() && buffer.len() == 5);
    let extra = buffer.records()[0].clone();
    assert!(buffer.push(extra.clone()).is_err());
    buffer.clear();
    assert!(buffer.is_empty());
    assert!(advantage_estimates(&buffer, 0.9).is_err());
    buffer.push(extra).unwrap();
    assert!(advantage_estimates(&buffer, 0.9).is_err(), "a partial buffer is not used for updates");
}

/// Counts the rounds a learner plays and checks it never sees anything but
/// the observation vector and reward.
struct Counting {
    inner: Environment,
    steps: usize,
}

impl PricingEnvironment for Counting {
    fn num_prices(&self) -> usize {
        self.inner.num_prices()
    }
    fn observation_dim(&self) -> usize {
        self.inner.observation_dim()
    }
    fn price_cap(&self) -> f64 {
        self.inner.price_cap()
    }
    fn observe(&self) -> Vec<f64> {
        self.inner.observe()
    }
    fn step(&mut self, action: &[f64]) -> Result<Feedback> {
        self.steps += 1;
        self.inner.step(action)
    }
}

#[test]
fn training_plays_batch_steps_per_episode_and_is_deterministic() {
    let cfg = TrainConfig {
        episodes: 4,
        batch_steps: 16,
        hidden: vec![8],
        seed: 9,
        ..TrainConfig::default()
    };
    let mut a = Counting { inner: environment(3), steps: 0 };
    let out_a = train(&mut a, &cfg).unwrap();
    assert_eq!(a.steps, 4 * 16);
    assert_eq!(out_a.trace.len(), 4);

    let mut b = Counting { inner: environment(3), steps: 0 };
    let out_b = train(&mut b, &cfg).unwrap();
    assert_eq!(out_a.policy, out_b.policy);
    let rows = |o: &crowdprice::learner::TrainOutcome| o.trace.iter().map(|t| t.csv_row()).collect::<Vec<_>>();
    assert_eq!(rows(&out_a), rows(&out_b));
}

/// The learner only reaches the game through `PricingEnvironment`: none of
/// its sources import the user model or call user-parameter accessors.
#[test]
fn learner_sources_are_isolated_from_user_parameters() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("src/learner");
    let allowed = [
        "use crate::error::",
        "use crate::report::",
        "use crate::learner::",
        "use crate::dynamics::PricingEnvironment;",
    ];
    let forbidden = [
        "MuProfile",
        "Scenario",
        "DemandDistribution",
        "crate::model",
        "crate::follower",
        "crate::leader",
        ".tau()",
        ".delta()",
        ".cost()",
        ".demand()",
        ".margin()",
    ];
    let mut checked = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "rs") {
            continue;
        }
        let text = fs::read_to_string(&path).unwrap();
        for line in text.lines() {
            let t = line.trim();
            if t.starts_with("use crate::") {
                assert!(allowed.iter().any(|a| t.starts_with(a)), "{}: {t}", path.display());
            }
            for f in forbidden {
                assert!(!t.contains(f), "{}: {t}", path.display());
            }
        }
        checked += 1;
    }
    assert!(checked >= 5);
}
