//! Stage-I pricing problem of the platform and the assembled equilibrium.
//!
//! Substituting the followers' best responses, the platform maximises
//! `U(p) = lambda * ln(b(x*(p))) - p . x*(p)` over the box
//! `prod_n [p_thr_n, delta_n]`. Prices below the threshold buy nothing and
//! prices above `delta_n` buy no more than `delta_n` does, so nothing outside
//! the box can be better. On the box `U` is smooth and strictly concave, and
//! projected gradient ascent with Armijo backtracking finds the unique
//! maximiser.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::follower::{best_response, best_responses, price_threshold, BestResponse};
use crate::model::{aggregate_b, mu_payoff, sp_payoff, Scenario};

/// Slack when testing membership of the price box.
const BOX_SLACK: f64 = 1e-12;
/// Minimum distance from every face required for the Hessian.
pub const HESSIAN_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Stop when the projected-gradient infinity norm falls below this.
    pub tol: f64,
    pub max_iters: usize,
    pub n_starts: usize,
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo sufficient-increase factor.
    pub armijo: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            max_iters: 20_000,
            n_starts: 5,
            initial_step: 1.0,
            shrink: 0.5,
            armijo: 1e-4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters == 0 || self.n_starts == 0 {
            return Err(Error::config("solver needs tol > 0, max_iters >= 1, n_starts >= 1"));
        }
        if !(self.initial_step > 0.0) || !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::config("solver needs initial_step > 0 and shrink in (0, 1)"));
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0) {
            return Err(Error::config("armijo factor must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub p_star: Vec<f64>,
    pub x_star: Vec<f64>,
    pub sp_payoff: f64,
    pub mu_payoffs: Vec<f64>,
    pub iterations: usize,
    /// Infinity norm of the projected gradient at `p_star`.
    pub grad_residual: f64,
    /// Largest pairwise infinity distance between the solutions of the
    /// individual starts.
    pub multistart_spread: f64,
}

/// Lower and upper faces of the price box.
pub fn price_box(scenario: &Scenario) -> (Vec<f64>, Vec<f64>) {
    scenario
        .mus()
        .iter()
        .map(|mu| (price_threshold(mu), mu.delta()))
        .unzip()
}

fn project(p: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    p.iter()
        .zip(lo.iter().zip(hi))
        .map(|(v, (l, h))| v.clamp(*l, *h))
        .collect()
}

fn check_in_box(scenario: &Scenario, p: &[f64], margin: f64) -> Result<()> {
    Error::check_len(scenario.len(), p.len())?;
    let (lo, hi) = price_box(scenario);
    for (n, (&pn, (&l, &h))) in p.iter().zip(lo.iter().zip(&hi)).enumerate() {
        let slack = if margin > 0.0 { -margin } else { BOX_SLACK * (1.0 + h.abs()) };
        if !(pn >= l - slack && pn <= h + slack) {
            return Err(Error::domain(format!(
                "price {pn} for user {n} outside [{l}, {h}] (margin {margin})"
            )));
        }
    }
    Ok(())
}

/// Platform payoff once followers best-respond to `p`.
pub fn induced_payoff(scenario: &Scenario, p: &[f64]) -> Result<f64> {
    let x: Vec<f64> = best_responses(scenario.mus(), p)?
        .iter()
        .map(|br| br.x_star)
        .collect();
    sp_payoff(&x, p, scenario.lambda())
}

struct Induced {
    br: Vec<BestResponse>,
    /// `g'(b) = lambda / b`.
    g1: f64,
    /// `g''(b) = -lambda / b^2`.
    g2: f64,
}

fn induce(scenario: &Scenario, p: &[f64]) -> Result<Induced> {
    let br = best_responses(scenario.mus(), p)?;
    let x: Vec<f64> = br.iter().map(|r| r.x_star).collect();
    let b = aggregate_b(&x)?;
    let lambda = scenario.lambda();
    Ok(Induced {
        br,
        g1: lambda / b,
        g2: -lambda / (b * b),
    })
}

/// Gradient of the induced platform payoff; `p` must lie in the price box.
pub fn sp_payoff_gradient(scenario: &Scenario, p: &[f64]) -> Result<Vec<f64>> {
    check_in_box(scenario, p, 0.0)?;
    let ind = induce(scenario, p)?;
    Ok(ind
        .br
        .iter()
        .zip(p)
        .map(|(r, &pn)| ind.g1 / (1.0 + r.x_star) * r.dx_dp - pn * r.dx_dp - r.x_star)
        .collect())
}

/// The Hessian as diagonal part plus rank-one part `g''(b) q q^T`.
#[derive(Debug, Clone)]
pub struct HessianParts {
    /// Diagonal of the first part; every entry is non-positive at prices that
    /// respect the marginal-utility bound.
    pub diag: Vec<f64>,
    pub q: Vec<f64>,
    pub g2: f64,
}

impl HessianParts {
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let n = self.q.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let r = self.g2 * self.q[i] * self.q[j];
                        if i == j {
                            self.diag[i] + r
                        } else {
                            r
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// `v^T H v` without forming `H`.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        let d: f64 = self.diag.iter().zip(v).map(|(l, vi)| l * vi * vi).sum();
        let qv: f64 = self.q.iter().zip(v).map(|(q, vi)| q * vi).sum();
        d + self.g2 * qv * qv
    }
}

pub fn sp_payoff_hessian_parts(scenario: &Scenario, p: &[f64]) -> Result<HessianParts> {
    check_in_box(scenario, p, HESSIAN_MARGIN)?;
    let ind = induce(scenario, p)?;
    let mut diag = Vec::with_capacity(p.len());
    let mut q = Vec::with_capacity(p.len());
    for (r, &pn) in ind.br.iter().zip(p) {
        let s = 1.0 + r.x_star;
        diag.push(
            (ind.g1 / s - pn) * r.d2x_dp2 - 2.0 * r.dx_dp - ind.g1 / (s * s) * r.dx_dp * r.dx_dp,
        );
        q.push(r.dx_dp / s);
    }
    Ok(HessianParts { diag, q, g2: ind.g2 })
}

/// Dense Hessian of the induced payoff at a point strictly inside the box.
pub fn sp_payoff_hessian(scenario: &Scenario, p: &[f64]) -> Result<Vec<Vec<f64>>> {
    Ok(sp_payoff_hessian_parts(scenario, p)?.dense())
}

/// `g'(b) / (1 + x_n)`, the platform's marginal utility of user `n`.
pub fn marginal_utilities(scenario: &Scenario, x: &[f64]) -> Result<Vec<f64>> {
    let g1 = scenario.lambda() / aggregate_b(x)?;
    Ok(x.iter().map(|xn| g1 / (1.0 + xn)).collect())
}

/// One run of projected gradient ascent.
#[derive(Debug, Clone)]
pub struct AscentRun {
    pub p: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Objective at the start and after every accepted step.
    pub history: Vec<f64>,
}

fn projected_residual(p: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    p.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((pn, gn), (l, h))| ((pn + gn).clamp(*l, *h) - pn).abs())
        .fold(0.0, f64::max)
}

/// True when every coordinate whose projected gradient exceeds `tol` has its
/// gradient change sign at the adjacent representable price, so no
/// floating-point price lies closer to stationarity. Users whose revenue
/// barely exceeds cost have response slopes large enough for one ulp of
/// price to move the gradient by more than `tol`.
fn resolved_to_precision(scenario: &Scenario, p: &[f64], g: &[f64], lo: &[f64], hi: &[f64], tol: f64) -> Result<bool> {
    for n in 0..p.len() {
        if ((p[n] + g[n]).clamp(lo[n], hi[n]) - p[n]).abs() <= tol {
            continue;
        }
        let mut q = p.to_vec();
        q[n] = if g[n] > 0.0 { p[n].next_up() } else { p[n].next_down() };
        if q[n] < lo[n] || q[n] > hi[n] {
            return Ok(false);
        }
        let gq = sp_payoff_gradient(scenario, &q)?;
        if gq[n].signum() == g[n].signum() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Projected gradient ascent from `start` (projected into the box first).
///
/// Steps are taken in box-normalised coordinates `(p - lo) / (hi - lo)`, i.e.
/// the gradient is scaled by the squared box width per user. A user whose
/// revenue barely exceeds cost has a tiny box and a response slope in
/// proportion, so unscaled steps would be limited by that user's curvature.
///
/// A trial step is accepted on the Armijo test when its gain exceeds the
/// rounding noise of the objective. Close to the optimum the objective change
/// drops below floating-point resolution, so a step whose
/// objective is unchanged to that resolution is also accepted when the
/// directional derivative at the trial point is still non-negative; by
/// concavity along the segment this certifies that the objective did not go
/// down.
pub fn projected_gradient_ascent(
    scenario: &Scenario,
    start: &[f64],
    cfg: &SolverConfig,
) -> Result<AscentRun> {
    cfg.validate()?;
    Error::check_len(scenario.len(), start.len())?;
    let (lo, hi) = price_box(scenario);
    let metric: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| (h - l) * (h - l)).collect();
    let mut p = project(start, &lo, &hi);
    let mut f = induced_payoff(scenario, &p)?;
    let mut g = sp_payoff_gradient(scenario, &p)?;
    let mut residual = projected_residual(&p, &g, &lo, &hi);
    let mut history = vec![f];
    let mut iterations = 0;

    while residual > cfg.tol && iterations < cfg.max_iters {
        let mut step = cfg.initial_step;
        let mut accepted = None;
        for _ in 0..80 {
            let trial: Vec<f64> = project(
                &p.iter()
                    .zip(&g)
                    .zip(&metric)
                    .map(|((pn, gn), w)| pn + step * w * gn)
                    .collect::<Vec<_>>(),
                &lo,
                &hi,
            );
            let d: Vec<f64> = trial.iter().zip(&p).map(|(t, pn)| t - pn).collect();
            let slope: f64 = g.iter().zip(&d).map(|(gn, dn)| gn * dn).sum();
            if slope <= 0.0 {
                break;
            }
            let f_trial = induced_payoff(scenario, &trial)?;
            let noise = 16.0 * f64::EPSILON * (1.0 + f.abs());
            // A gain inside the rounding noise says nothing about overshoot.
            if f_trial >= f + cfg.armijo * slope && f_trial - f > noise {
                accepted = Some((trial, f_trial));
                break;
            }
            if f_trial >= f - noise {
                let g_trial = sp_payoff_gradient(scenario, &trial)?;
                let slope_end: f64 = g_trial.iter().zip(&d).map(|(gn, dn)| gn * dn).sum();
                if slope_end >= 0.0 {
                    accepted = Some((trial, f_trial.max(f)));
                    break;
                }
            }
            step *= cfg.shrink;
        }
        let Some((trial, f_trial)) = accepted else {
            break;
        };
        p = trial;
        f = f_trial;
        g = sp_payoff_gradient(scenario, &p)?;
        residual = projected_residual(&p, &g, &lo, &hi);
        history.push(f);
        iterations += 1;
    }

    let converged = residual <= cfg.tol || resolved_to_precision(scenario, &p, &g, &lo, &hi, cfg.tol)?;
    Ok(AscentRun {
        objective: induced_payoff(scenario, &p)?,
        converged,
        p,
        iterations,
        residual,
        history,
    })
}

/// Random start for multistart index `start`, uniform over the box.
pub fn initial_prices(scenario: &Scenario, start: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed().wrapping_add(start as u64));
    let (lo, hi) = price_box(scenario);
    lo.iter()
        .zip(&hi)
        .map(|(l, h)| l + (h - l) * rng.random::<f64>())
        .collect()
}

fn check_admissible(scenario: &Scenario) -> Result<()> {
    for (n, mu) in scenario.mus().iter().enumerate() {
        if !mu.demand().is_admissible() {
            return Err(Error::config(format!(
                "user {n}: demand density must be positive and non-increasing for equilibrium solving"
            )));
        }
    }
    Ok(())
}

fn assemble(scenario: &Scenario, mut p: Vec<f64>, iterations: usize, residual: f64, spread: f64) -> Result<EquilibriumResult> {
    let br = best_responses(scenario.mus(), &p)?;
    // Canonical representative: a user who contributes nothing is quoted its threshold.
    for ((pn, r), mu) in p.iter_mut().zip(&br).zip(scenario.mus()) {
        if r.x_star == 0.0 {
            *pn = price_threshold(mu);
        }
    }
    let x_star: Vec<f64> = best_responses(scenario.mus(), &p)?
        .iter()
        .map(|r| r.x_star)
        .collect();
    let mu_payoffs = scenario
        .mus()
        .iter()
        .zip(x_star.iter().zip(&p))
        .map(|(mu, (&x, &pn))| mu_payoff(mu, x, pn))
        .collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumResult {
        sp_payoff: sp_payoff(&x_star, &p, scenario.lambda())?,
        p_star: p,
        x_star,
        mu_payoffs,
        iterations,
        grad_residual: residual,
        multistart_spread: spread,
    })
}

/// Solves the platform's pricing problem from `cfg.n_starts` random starts
/// and keeps the best (ties go to the lowest start index).
pub fn solve_optimal_prices(scenario: &Scenario, cfg: &SolverConfig) -> Result<EquilibriumResult> {
    cfg.validate()?;
    check_admissible(scenario)?;
    let runs = (0..cfg.n_starts)
        .map(|s| projected_gradient_ascent(scenario, &initial_prices(scenario, s), cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut best = 0;
    for (i, run) in runs.iter().enumerate().skip(1) {
        if run.objective > runs[best].objective {
            best = i;
        }
    }
    let mut spread: f64 = 0.0;
    for (i, a) in runs.iter().enumerate() {
        for b in &runs[i + 1..] {
            let d = a.p.iter().zip(&b.p).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            spread = spread.max(d);
        }
    }
    let run = &runs[best];
    let result = assemble(scenario, run.p.clone(), run.iterations, run.residual, spread)?;
    if runs.iter().all(|r| r.converged) {
        Ok(result)
    } else {
        Err(Error::NotConverged {
            best: Box::new(result),
        })
    }
}

/// Stackelberg equilibrium: stage-I prices, then stage-II best responses and
/// every payoff evaluated at those prices.
pub fn compute_se(scenario: &Scenario, cfg: &SolverConfig) -> Result<EquilibriumResult> {
    let stage_one = solve_optimal_prices(scenario, cfg)?;
    let mut x_star = Vec::with_capacity(scenario.len());
    let mut mu_payoffs = Vec::with_capacity(scenario.len());
    for (mu, &pn) in scenario.mus().iter().zip(&stage_one.p_star) {
        let x = best_response(mu, pn)?.x_star;
        mu_payoffs.push(mu_payoff(mu, x, pn)?);
        x_star.push(x);
    }
    Ok(EquilibriumResult {
        sp_payoff: sp_payoff(&x_star, &stage_one.p_star, scenario.lambda())?,
        x_star,
        mu_payoffs,
        ..stage_one
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DemandDistribution, MuProfile};
    use approx::assert_abs_diff_eq;

    fn single() -> Scenario {
        let mu = MuProfile::new(20.0, 1.0, 0.0, DemandDistribution::uniform(0.0, 25.0).unwrap()).unwrap();
        Scenario::new(50.0, vec![mu], 1).unwrap()
    }

    #[test]
    fn gradient_examples() {
        let s = single();
        let g = sp_payoff_gradient(&s, &[0.2]).unwrap();
        assert_abs_diff_eq!(g[0], 1245.0, epsilon = 1e-9);
        let g = sp_payoff_gradient(&s, &[1.0]).unwrap();
        let b = 1.0 + 21f64.ln();
        assert_abs_diff_eq!(g[0], 50.0 / b * 25.0 / 21.0 - 25.0 - 20.0, epsilon = 1e-9);
        assert!(g[0] < 0.0);
        assert!(sp_payoff_gradient(&s, &[0.1]).is_err());
        assert!(sp_payoff_gradient(&s, &[1.1]).is_err());
    }

    #[test]
    fn hessian_rejects_faces() {
        let s = single();
        assert!(sp_payoff_hessian(&s, &[0.2]).is_err());
        assert!(sp_payoff_hessian(&s, &[1.0 - 1e-7]).is_err());
        assert!(sp_payoff_hessian(&s, &[0.5]).is_ok());
    }

    #[test]
    fn single_user_solution() {
        let s = single();
        let se = compute_se(&s, &SolverConfig::default()).unwrap();
        assert!(se.grad_residual <= 1e-8);
        assert!(se.multistart_spread <= 1e-5);
        // Interior optimum: the gradient vanishes.
        let g = sp_payoff_gradient(&s, &se.p_star).unwrap();
        assert!(g[0].abs() <= 1e-8);
    }

    #[test]
    fn ascent_history_is_monotone() {
        let s = single();
        let run = projected_gradient_ascent(&s, &[0.95], &SolverConfig::default()).unwrap();
        assert!(run.converged);
        for w in run.history.windows(2) {
            assert!(w[1] >= w[0], "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let s = single();
        let cfg = SolverConfig {
            max_iters: 1,
            n_starts: 2,
            ..SolverConfig::default()
        };
        match solve_optimal_prices(&s, &cfg) {
            Err(Error::NotConverged { best }) => {
                assert_eq!(best.p_star.len(), 1);
                assert!(best.grad_residual > 1e-8);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_increasing_density() {
        let d = DemandDistribution::truncated_exponential(0.0, 25.0, -0.1).unwrap();
        let mu = MuProfile::new(20.0, 1.0, 0.0, d).unwrap();
        let s = Scenario::new(50.0, vec![mu], 0).unwrap();
        assert!(matches!(compute_se(&s, &SolverConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn bad_solver_config() {
        let cfg = SolverConfig {
            shrink: 1.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
