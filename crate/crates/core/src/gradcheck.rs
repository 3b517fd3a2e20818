//! Finite-difference verification of every analytic derivative.
//!
//! Each check draws random probes, evaluates the analytic gradient and a
//! central difference, and records the worst relative error
//! `|a - d|_inf / max(|a|_inf, |d|_inf, 1e-12)` over its probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cli::{generate_scenario, GenerationSpec};
use crate::error::Result;
use crate::leader::{induced_payoff, price_box, sp_payoff_gradient, sp_payoff_hessian};
use crate::learner::{
    clipped_objective, critic_loss_and_gradient, gaussian_log_density, mlp_backward, ppo_actor_gradient, MlpParams,
    OutputHead, PolicyParams, StepRecord, TrajectoryBuffer,
};
use crate::report::fmt_num;

/// Names of the registered checks, in table order.
pub const CHECKS: [&str; 6] = [
    "leader_gradient",
    "leader_hessian_diagonal",
    "mlp_actor_backprop",
    "mlp_critic_backprop",
    "ppo_surrogate_gradient",
    "critic_loss_gradient",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub probes: usize,
    /// Test hook: perturbs the analytic gradient of the named check.
    pub corrupt: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            seed: 0,
            probes: 10,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub probes: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    pub fn csv_header() -> Vec<String> {
        ["check", "probes", "max_rel_err", "tolerance", "passed"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.name.clone(),
            self.probes.to_string(),
            fmt_num(self.max_rel_err),
            fmt_num(self.tolerance),
            self.passed.to_string(),
        ]
    }
}

/// Tolerance of a registered check.
pub fn tolerance(name: &str) -> f64 {
    match name {
        "leader_gradient" => 1e-5,
        "leader_hessian_diagonal" => 1e-3,
        _ => 1e-4,
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, d)| (a - d).abs())
        .fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(1e-12, f64::max);
    diff / scale
}

/// Central differences of `f` at `x` with step `h` in every coordinate.
pub fn central_difference<F>(x: &[f64], h: f64, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe)?;
        probe[i] = x[i] - h;
        let down = f(&probe)?;
        probe[i] = x[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

fn corrupt(grad: &mut [f64]) {
    if let Some(g) = grad.first_mut() {
        *g = *g * 1.01 + 1e-3;
    }
}

/// Runs every registered check.
pub fn run_gradcheck(opts: &GradcheckOptions) -> Result<Vec<CheckResult>> {
    CHECKS.iter().map(|name| run_check(name, opts)).collect()
}

/// Runs one registered check; panics on an unknown name.
pub fn run_check(name: &str, opts: &GradcheckOptions) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ fnv(name));
    let mut worst: f64 = 0.0;
    for probe in 0..opts.probes {
        let (mut analytic, numeric) = match name {
            "leader_gradient" => leader_gradient_probe(opts.seed.wrapping_add(probe as u64), &mut rng)?,
            "leader_hessian_diagonal" => leader_hessian_probe(opts.seed.wrapping_add(probe as u64), &mut rng)?,
            "mlp_actor_backprop" => mlp_probe(OutputHead::ScaledSigmoid { scale: 1.0 }, 3, &mut rng)?,
            "mlp_critic_backprop" => mlp_probe(OutputHead::Linear, 1, &mut rng)?,
            "ppo_surrogate_gradient" => surrogate_probe(&mut rng)?,
            "critic_loss_gradient" => critic_probe(&mut rng)?,
            other => panic!("unknown gradient check {other}"),
        };
        if opts.corrupt.as_deref() == Some(name) {
            corrupt(&mut analytic);
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    let tol = tolerance(name);
    Ok(CheckResult {
        name: name.to_string(),
        probes: opts.probes,
        max_rel_err: worst,
        tolerance: tol,
        passed: worst <= tol,
    })
}

fn fnv(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Random price strictly inside the box, 5% away from each face.
fn interior_prices<R: Rng + ?Sized>(lo: &[f64], hi: &[f64], rng: &mut R) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(l, h)| l + (h - l) * (0.05 + 0.9 * rng.random::<f64>()))
        .collect()
}

fn leader_gradient_probe<R: Rng + ?Sized>(scenario_seed: u64, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = generate_scenario(&GenerationSpec::default(), scenario_seed)?;
    let (lo, hi) = price_box(&s);
    let p = interior_prices(&lo, &hi, rng);
    let analytic = sp_payoff_gradient(&s, &p)?;
    let numeric = central_difference(&p, 1e-6, |q| induced_payoff(&s, q))?;
    Ok((analytic, numeric))
}

fn leader_hessian_probe<R: Rng + ?Sized>(scenario_seed: u64, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = generate_scenario(&GenerationSpec::default(), scenario_seed)?;
    let (lo, hi) = price_box(&s);
    let p = interior_prices(&lo, &hi, rng);
    let h = sp_payoff_hessian(&s, &p)?;
    let analytic: Vec<f64> = (0..p.len()).map(|i| h[i][i]).collect();
    let step = 1e-5;
    let mut numeric = Vec::with_capacity(p.len());
    let mut q = p.clone();
    for i in 0..p.len() {
        q[i] = p[i] + step;
        let up = sp_payoff_gradient(&s, &q)?[i];
        q[i] = p[i] - step;
        let down = sp_payoff_gradient(&s, &q)?[i];
        q[i] = p[i];
        numeric.push((up - down) / (2.0 * step));
    }
    Ok((analytic, numeric))
}

fn random_vec<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect()
}

fn mlp_probe<R: Rng + ?Sized>(head: OutputHead, out: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    let net = MlpParams::init(&[4, 6, 5, out], head, 1.0, rng);
    let input = random_vec(4, 1.5, rng);
    let upstream = random_vec(out, 1.0, rng);
    let analytic = mlp_backward(&net, &input, &upstream)?.flat();
    let mut work = net.clone();
    let numeric = central_difference(&net.flat(), 1e-5, |theta| {
        work.set_flat(theta)?;
        let y = work.forward(&input)?;
        Ok(y.iter().zip(&upstream).map(|(a, b)| a * b).sum())
    })?;
    Ok((analytic, numeric))
}

/// Small policy with non-trivial observation normalisation and a 4-step
/// buffer whose behaviour log-densities differ from the current policy.
fn toy_policy_and_buffer<R: Rng + ?Sized>(rng: &mut R) -> Result<(PolicyParams, TrajectoryBuffer)> {
    let (obs, n, d) = (4, 2, 4);
    let mut policy = PolicyParams::new(obs, n, &[5, 4], 1.0, -0.5, rng);
    policy.actor = MlpParams::init(&[obs, 5, 4, n], OutputHead::ScaledSigmoid { scale: 1.0 }, 1.0, rng);
    policy.obs_shift = random_vec(obs, 0.5, rng);
    policy.obs_scale = (0..obs).map(|_| 0.5 + rng.random::<f64>()).collect();
    let mut buffer = TrajectoryBuffer::new(d);
    for _ in 0..d {
        let state = random_vec(obs, 2.0, rng);
        let mean = policy.mean(&state)?;
        let action: Vec<f64> = mean.iter().map(|m| m + 0.5 * (2.0 * rng.random::<f64>() - 1.0)).collect();
        // Shifted so that ratios land on both sides of the clip interval.
        let log_prob = gaussian_log_density(&mean, &policy.log_std, &action) + 0.6 * (2.0 * rng.random::<f64>() - 1.0);
        buffer.push(StepRecord {
            state,
            action,
            log_prob,
            reward: 2.0 * rng.random::<f64>() - 0.5,
            value: rng.random::<f64>(),
        })?;
    }
    buffer.set_bootstrap(rng.random::<f64>());
    Ok((policy, buffer))
}

fn actor_flat(policy: &PolicyParams) -> Vec<f64> {
    let mut v = policy.actor.flat();
    v.extend_from_slice(&policy.log_std);
    v
}

fn set_actor_flat(policy: &mut PolicyParams, theta: &[f64]) -> Result<()> {
    let k = theta.len() - policy.log_std.len();
    policy.actor.set_flat(&theta[..k])?;
    policy.log_std.copy_from_slice(&theta[k..]);
    Ok(())
}

const EPSILON: f64 = 0.2;
const GAMMA: f64 = 0.9;
const STEP: f64 = 1e-6;

fn ratios_clear_of_kinks(policy: &PolicyParams, buffer: &TrajectoryBuffer) -> Result<bool> {
    for rec in buffer.records() {
        let lp = gaussian_log_density(&policy.mean(&rec.state)?, &policy.log_std, &rec.action);
        let ratio = (lp - rec.log_prob).exp();
        if (ratio - (1.0 - EPSILON)).abs() < 1e-3 || (ratio - (1.0 + EPSILON)).abs() < 1e-3 {
            return Ok(false);
        }
    }
    Ok(true)
}

fn surrogate_probe<R: Rng + ?Sized>(rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    let (policy, buffer) = loop {
        let (policy, buffer) = toy_policy_and_buffer(rng)?;
        if ratios_clear_of_kinks(&policy, &buffer)? {
            break (policy, buffer);
        }
    };
    let analytic = ppo_actor_gradient(&policy, &buffer, EPSILON, GAMMA)?.1.flat();
    let mut work = policy.clone();
    let numeric = central_difference(&actor_flat(&policy), STEP, |theta| {
        set_actor_flat(&mut work, theta)?;
        clipped_objective(&work, &buffer, EPSILON, GAMMA)
    })?;
    Ok((analytic, numeric))
}

fn critic_probe<R: Rng + ?Sized>(rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
    let (policy, buffer) = toy_policy_and_buffer(rng)?;
    let analytic = critic_loss_and_gradient(&policy, &buffer, GAMMA)?.1.flat();
    let mut work = policy.clone();
    let numeric = central_difference(&policy.critic.flat(), STEP, |omega| {
        work.critic.set_flat(omega)?;
        Ok(critic_loss_and_gradient(&work, &buffer, GAMMA)?.0)
    })?;
    Ok((analytic, numeric))
}
