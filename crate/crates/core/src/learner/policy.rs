//! Gaussian pricing policy and state-value critic.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::learner::mlp::{MlpGrads, MlpParams, OutputHead};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 1.0;
/// Normalised observations are clipped to `[-OBS_CLIP, OBS_CLIP]`.
pub const OBS_CLIP: f64 = 10.0;

/// Actor mean network, state-independent log standard deviations, the
/// critic, and the affine observation normalisation both networks share.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub actor: MlpParams,
    pub log_std: Vec<f64>,
    pub critic: MlpParams,
    pub obs_shift: Vec<f64>,
    pub obs_scale: Vec<f64>,
}

/// Gradient with respect to the actor network and the log standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorGrads {
    pub actor: MlpGrads,
    pub log_std: Vec<f64>,
}

impl ActorGrads {
    pub fn zeros_like(policy: &PolicyParams) -> Self {
        ActorGrads {
            actor: MlpGrads::zeros_like(&policy.actor),
            log_std: vec![0.0; policy.log_std.len()],
        }
    }

    /// Network gradients followed by the log-std gradients.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = self.actor.flat();
        v.extend_from_slice(&self.log_std);
        v
    }
}

impl PolicyParams {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        n_prices: usize,
        hidden: &[usize],
        p_max: f64,
        log_std_init: f64,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(n_prices);
        let actor = MlpParams::init(&sizes, OutputHead::ScaledSigmoid { scale: p_max }, 0.01, rng);
        *sizes.last_mut().expect("non-empty") = 1;
        let critic = MlpParams::init(&sizes, OutputHead::Linear, 1.0, rng);
        PolicyParams {
            actor,
            log_std: vec![log_std_init.clamp(LOG_STD_MIN, LOG_STD_MAX); n_prices],
            critic,
            obs_shift: vec![0.0; obs_dim],
            obs_scale: vec![1.0; obs_dim],
        }
    }

    /// `(obs - shift) / scale`, clipped to `OBS_CLIP`. This is the network input.
    pub fn normalize(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.obs_shift.len(), obs.len())?;
        Ok(obs
            .iter()
            .zip(self.obs_shift.iter().zip(&self.obs_scale))
            .map(|(o, (m, s))| ((o - m) / s).clamp(-OBS_CLIP, OBS_CLIP))
            .collect())
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.actor.forward(&self.normalize(obs)?)
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(&self.normalize(obs)?)?[0])
    }

    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        Ok(gaussian_log_density(&self.mean(obs)?, &self.log_std, action))
    }

    /// Draws a pre-clamp action and its log-density.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<(Vec<f64>, f64)> {
        let mean = self.mean(obs)?;
        let action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = StandardNormal.sample(rng);
                m + ls.exp() * z
            })
            .collect();
        let lp = gaussian_log_density(&mean, &self.log_std, &action);
        Ok((action, lp))
    }

    pub fn clamp_log_std(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.actor.all_finite()
            && self.critic.all_finite()
            && self.log_std.iter().all(|v| v.is_finite())
            && self.obs_shift.iter().all(|v| v.is_finite())
            && self.obs_scale.iter().all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Running mean and variance of observations (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStats {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl ObservationStats {
    /// Scale floor so a feature that has barely moved is not blown up.
    pub const MIN_SCALE: f64 = 1e-2;

    pub fn new(dim: usize) -> Self {
        ObservationStats {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn push(&mut self, obs: &[f64]) {
        self.count += 1.0;
        for ((m, m2), o) in self.mean.iter_mut().zip(&mut self.m2).zip(obs) {
            let d = o - *m;
            *m += d / self.count;
            *m2 += d * (o - *m);
        }
    }

    /// Copies the current mean and standard deviation into `policy`.
    pub fn apply(&self, policy: &mut PolicyParams) {
        if self.count < 2.0 {
            return;
        }
        policy.obs_shift.clone_from(&self.mean);
        policy.obs_scale = self
            .m2
            .iter()
            .map(|m2| (m2 / self.count).sqrt().max(Self::MIN_SCALE))
            .collect();
    }
}

/// Log-density of a diagonal Gaussian.
pub fn gaussian_log_density(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

/// Partial derivatives of the log-density with respect to the mean and the
/// log standard deviations.
pub fn gaussian_log_density_grad(mean: &[f64], log_std: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((m, ls), a)| {
            let var = (2.0 * ls).exp();
            let z2 = (a - m) * (a - m) / var;
            ((a - m) / var, z2 - 1.0)
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_prob_of_mean() {
        let lp = gaussian_log_density(&[0.3], &[0.0], &[0.3]);
        assert!((lp + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn narrow_policy_stays_near_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut policy = PolicyParams::new(4, 2, &[8], 1.0, -5.0, &mut rng);
        policy.log_std = vec![-5.0; 2];
        let obs = [0.1, 0.2, 0.3, 0.4];
        let mean = policy.mean(&obs).unwrap();
        let sigma = (-5f64).exp();
        for _ in 0..1000 {
            let (a, _) = policy.sample(&obs, &mut rng).unwrap();
            for (ai, mi) in a.iter().zip(&mean) {
                assert!((ai - mi).abs() <= 4.0 * sigma);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let mut init = ChaCha8Rng::seed_from_u64(1);
        let policy = PolicyParams::new(4, 3, &[8], 1.0, -0.5, &mut init);
        let obs = [1.0, 0.0, -1.0, 0.5];
        let a = policy.sample(&obs, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let b = policy.sample(&obs, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a, b);
        assert!((a.1 - policy.log_prob(&obs, &a.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn initial_mean_is_mid_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = PolicyParams::new(10, 5, &[64, 64], 1.0, -0.5, &mut rng);
        for m in policy.mean(&[0.5; 10]).unwrap() {
            assert!((m - 0.5).abs() < 0.05);
        }
        assert_eq!(policy.log_std, vec![-0.5; 5]);
    }
}
