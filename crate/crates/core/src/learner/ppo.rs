//! Rollout buffer, advantage estimates and the two PPO losses.

use crate::error::{Error, Result};
use crate::learner::mlp::MlpGrads;
use crate::learner::policy::{gaussian_log_density, gaussian_log_density_grad, ActorGrads, PolicyParams};

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub state: Vec<f64>,
    /// Pre-clamp action as sampled.
    pub action: Vec<f64>,
    /// Log-density under the behaviour policy.
    pub log_prob: f64,
    pub reward: f64,
    /// Critic estimate of the state when the step was taken.
    pub value: f64,
}

/// `D` consecutive steps plus the bootstrap value of the state after the last.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBuffer {
    capacity: usize,
    records: Vec<StepRecord>,
    bootstrap_value: Option<f64>,
}

impl TrajectoryBuffer {
    pub fn new(capacity: usize) -> Self {
        TrajectoryBuffer {
            capacity,
            records: Vec::with_capacity(capacity),
            bootstrap_value: None,
        }
    }

    pub fn clear(&mut self) {
        self.records.clear();
        self.bootstrap_value = None;
    }

    pub fn push(&mut self, record: StepRecord) -> Result<()> {
        if self.records.len() == self.capacity {
            return Err(Error::State(format!("buffer already holds {} steps", self.capacity)));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn set_bootstrap(&mut self, value: f64) {
        self.bootstrap_value = Some(value);
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.records.len() == self.capacity && self.bootstrap_value.is_some()
    }

    fn require_full(&self) -> Result<f64> {
        match self.bootstrap_value {
            Some(v) if self.records.len() == self.capacity => Ok(v),
            _ => Err(Error::State(format!(
                "buffer incomplete: {} of {} steps, bootstrap {}",
                self.records.len(),
                self.capacity,
                if self.bootstrap_value.is_some() { "set" } else { "missing" }
            ))),
        }
    }
}

/// Critic targets `sum_{l>=k} gamma^(l-k) r(l) + gamma^(D+1-k) V(s(D+1))`.
pub fn value_targets(buffer: &TrajectoryBuffer, gamma: f64) -> Result<Vec<f64>> {
    let mut acc = buffer.require_full()?;
    let mut out = vec![0.0; buffer.len()];
    for (k, rec) in buffer.records.iter().enumerate().rev() {
        acc = rec.reward + gamma * acc;
        out[k] = acc;
    }
    Ok(out)
}

/// `A(k) = target(k) - V(s(k))` using the values stored at sampling time.
pub fn advantage_estimates(buffer: &TrajectoryBuffer, gamma: f64) -> Result<Vec<f64>> {
    Ok(value_targets(buffer, gamma)?
        .into_iter()
        .zip(&buffer.records)
        .map(|(g, rec)| g - rec.value)
        .collect())
}

/// Three-piece clamp of the probability ratio to `[1 - eps, 1 + eps]`.
pub fn clip_ratio(ratio: f64, epsilon: f64) -> f64 {
    ratio.clamp(1.0 - epsilon, 1.0 + epsilon)
}

/// `sum_k min(f(k) A(k), clip(f(k)) A(k))` for the current actor.
pub fn clipped_objective(policy: &PolicyParams, buffer: &TrajectoryBuffer, epsilon: f64, gamma: f64) -> Result<f64> {
    let adv = advantage_estimates(buffer, gamma)?;
    let mut total = 0.0;
    for (rec, a) in buffer.records.iter().zip(&adv) {
        let mean = policy.mean(&rec.state)?;
        let ratio = (gaussian_log_density(&mean, &policy.log_std, &rec.action) - rec.log_prob).exp();
        total += (ratio * a).min(clip_ratio(ratio, epsilon) * a);
    }
    Ok(total)
}

/// Value and gradient of the clipped surrogate with respect to the actor and
/// the log standard deviations.
///
/// When the clipped branch is the minimum and the ratio is outside the clip
/// interval, that branch is constant in the parameters and contributes zero.
pub fn ppo_actor_gradient(
    policy: &PolicyParams,
    buffer: &TrajectoryBuffer,
    epsilon: f64,
    gamma: f64,
) -> Result<(f64, ActorGrads)> {
    let adv = advantage_estimates(buffer, gamma)?;
    let mut grads = ActorGrads::zeros_like(policy);
    let mut total = 0.0;
    for (rec, &a) in buffer.records.iter().zip(&adv) {
        let cache = policy.actor.forward_cached(&policy.normalize(&rec.state)?)?;
        let mean = &cache.output;
        let ratio = (gaussian_log_density(mean, &policy.log_std, &rec.action) - rec.log_prob).exp();
        let clipped = clip_ratio(ratio, epsilon);
        let unclipped_term = ratio * a;
        let clipped_term = clipped * a;
        total += unclipped_term.min(clipped_term);
        let active = unclipped_term <= clipped_term || clipped == ratio;
        if !active {
            continue;
        }
        // d(ratio * A) = ratio * A * d log pi.
        let w = ratio * a;
        let (d_mean, d_log_std) = gaussian_log_density_grad(mean, &policy.log_std, &rec.action);
        let upstream: Vec<f64> = d_mean.iter().map(|g| w * g).collect();
        let g = policy.actor.backward(&cache, &upstream)?;
        grads.actor.accumulate(&g, 1.0);
        for (acc, d) in grads.log_std.iter_mut().zip(&d_log_std) {
            *acc += w * d;
        }
    }
    Ok((total, grads))
}

/// Squared-error critic loss against fixed bootstrap targets and its gradient.
pub fn critic_loss_and_gradient(policy: &PolicyParams, buffer: &TrajectoryBuffer, gamma: f64) -> Result<(f64, MlpGrads)> {
    let targets = value_targets(buffer, gamma)?;
    let mut grads = MlpGrads::zeros_like(&policy.critic);
    let mut loss = 0.0;
    for (rec, target) in buffer.records.iter().zip(&targets) {
        let cache = policy.critic.forward_cached(&policy.normalize(&rec.state)?)?;
        let err = target - cache.output[0];
        loss += err * err;
        let g = policy.critic.backward(&cache, &[-2.0 * err])?;
        grads.accumulate(&g, 1.0);
    }
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rec(reward: f64, value: f64) -> StepRecord {
        StepRecord {
            state: vec![0.0],
            action: vec![0.0],
            log_prob: 0.0,
            reward,
            value,
        }
    }

    fn buffer(rewards: &[f64], values: &[f64], bootstrap: f64) -> TrajectoryBuffer {
        let mut b = TrajectoryBuffer::new(rewards.len());
        for (r, v) in rewards.iter().zip(values) {
            b.push(rec(*r, *v)).unwrap();
        }
        b.set_bootstrap(bootstrap);
        b
    }

    #[test]
    fn advantages_undiscounted() {
        let b = buffer(&[1.0, 0.5], &[0.2, 0.1], 0.0);
        let a = advantage_estimates(&b, 1.0).unwrap();
        assert!((a[0] - 1.3).abs() < 1e-15 && (a[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn advantages_degenerate_cases() {
        let b = buffer(&[0.0; 4], &[0.0; 4], 0.0);
        assert_eq!(advantage_estimates(&b, 0.9).unwrap(), vec![0.0; 4]);
        let b = buffer(&[1.0, 2.0, 3.0], &[0.5, 0.25, 1.0], 7.0);
        let a = advantage_estimates(&b, 0.0).unwrap();
        assert_eq!(a, vec![0.5, 1.75, 2.0]);
    }

    #[test]
    fn discounted_advantages() {
        let b = buffer(&[1.0, 2.0], &[0.0, 0.0], 4.0);
        let a = advantage_estimates(&b, 0.5).unwrap();
        assert_eq!(a, vec![1.0 + 0.5 * 2.0 + 0.25 * 4.0, 2.0 + 0.5 * 4.0]);
    }

    #[test]
    fn incomplete_buffer_is_rejected() {
        let mut b = TrajectoryBuffer::new(2);
        b.push(rec(1.0, 0.0)).unwrap();
        assert!(matches!(advantage_estimates(&b, 1.0), Err(Error::State(_))));
        b.push(rec(1.0, 0.0)).unwrap();
        assert!(advantage_estimates(&b, 1.0).is_err());
        assert!(b.push(rec(1.0, 0.0)).is_err());
        b.set_bootstrap(0.0);
        assert!(b.is_full());
        b.clear();
        assert!(b.is_empty() && !b.is_full());
    }

    #[test]
    fn clip_values() {
        assert_eq!(clip_ratio(1.5, 0.2), 1.2);
        assert_eq!(clip_ratio(0.7, 0.2), 0.8);
        assert_eq!(clip_ratio(1.0, 0.2), 1.0);
    }

    #[test]
    fn critic_loss_simple() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut policy = PolicyParams::new(1, 1, &[4], 1.0, 0.0, &mut rng);
        policy.critic = crate::learner::mlp::MlpParams::zeros(&[1, 4, 1], crate::learner::mlp::OutputHead::Linear);
        let b = buffer(&[1.0], &[0.0], 0.0);
        let (loss, _) = critic_loss_and_gradient(&policy, &b, 1.0).unwrap();
        assert_eq!(loss, 1.0);
        // Targets equal to the critic output: zero loss and zero gradient.
        let b = buffer(&[0.0, 0.0], &[0.0, 0.0], 0.0);
        let (loss, g) = critic_loss_and_gradient(&policy, &b, 0.9).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.flat().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn first_epoch_surrogate_equals_policy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let policy = PolicyParams::new(3, 2, &[6], 1.0, -0.5, &mut rng);
        let mut b = TrajectoryBuffer::new(4);
        for k in 0..4 {
            let s = vec![0.1 * k as f64, -0.2, 0.3];
            let (a, lp) = policy.sample(&s, &mut rng).unwrap();
            b.push(StepRecord {
                state: s,
                action: a,
                log_prob: lp,
                reward: 0.3 - 0.1 * k as f64,
                value: 0.05,
            })
            .unwrap();
        }
        b.set_bootstrap(0.1);
        let adv = advantage_estimates(&b, 0.9).unwrap();
        let (obj, g) = ppo_actor_gradient(&policy, &b, 0.2, 0.9).unwrap();
        assert!((obj - adv.iter().sum::<f64>()).abs() < 1e-12);
        // Plain score-function gradient sum_k A(k) grad log pi(k).
        let mut expect = ActorGrads::zeros_like(&policy);
        for (rec, a) in b.records().iter().zip(&adv) {
            let cache = policy.actor.forward_cached(&policy.normalize(&rec.state).unwrap()).unwrap();
            let (dm, dl) = gaussian_log_density_grad(&cache.output, &policy.log_std, &rec.action);
            let up: Vec<f64> = dm.iter().map(|v| a * v).collect();
            expect.actor.accumulate(&policy.actor.backward(&cache, &up).unwrap(), 1.0);
            for (e, d) in expect.log_std.iter_mut().zip(&dl) {
                *e += a * d;
            }
        }
        for (x, y) in g.flat().iter().zip(expect.flat()) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}
