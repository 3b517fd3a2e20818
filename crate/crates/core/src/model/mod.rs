//! Scenario data and payoff arithmetic shared by every other module.
//!
//! The platform's utility is `lambda * ln(b)` with
//! `b = 1 + sum_i ln(1 + x_i)`. A mobile user keeps `tau - x` units for its
//! own random demand and earns `(delta - cost) * E[min(xi, tau - x)]` on it;
//! its game payoff is the increment over not participating.

mod demand;

use std::ops::Deref;

use serde::{Deserialize, Serialize};

pub use demand::{adaptive_simpson, DemandDistribution, DemandKind, QUADRATURE_TOL};

use crate::error::{Error, Result};

/// Private parameters of one mobile user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMu", into = "RawMu")]
pub struct MuProfile {
    tau: f64,
    delta: f64,
    cost: f64,
    demand: DemandDistribution,
}

#[derive(Serialize, Deserialize)]
struct RawMu {
    tau: f64,
    delta: f64,
    cost: f64,
    demand: DemandDistribution,
}

impl TryFrom<RawMu> for MuProfile {
    type Error = Error;

    fn try_from(raw: RawMu) -> Result<Self> {
        MuProfile::new(raw.tau, raw.delta, raw.cost, raw.demand)
    }
}

impl From<MuProfile> for RawMu {
    fn from(mu: MuProfile) -> Self {
        RawMu {
            tau: mu.tau,
            delta: mu.delta,
            cost: mu.cost,
            demand: mu.demand,
        }
    }
}

impl MuProfile {
    /// Requires `tau > 0` and `0 <= cost < delta`. A user whose own-demand
    /// revenue equals its cost has no interior best response and is rejected.
    pub fn new(tau: f64, delta: f64, cost: f64, demand: DemandDistribution) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::config(format!("tau must be positive and finite, got {tau}")));
        }
        if !(cost.is_finite() && delta.is_finite()) || cost < 0.0 || cost >= delta {
            return Err(Error::config(format!(
                "need 0 <= cost < delta, got cost={cost}, delta={delta}"
            )));
        }
        Ok(MuProfile {
            tau,
            delta,
            cost,
            demand,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn demand(&self) -> &DemandDistribution {
        &self.demand
    }

    /// Margin `delta - cost`, strictly positive.
    pub fn margin(&self) -> f64 {
        self.delta - self.cost
    }
}

/// A full game instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScenario", into = "RawScenario")]
pub struct Scenario {
    lambda: f64,
    mus: Vec<MuProfile>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct RawScenario {
    lambda: f64,
    mus: Vec<MuProfile>,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<RawScenario> for Scenario {
    type Error = Error;

    fn try_from(raw: RawScenario) -> Result<Self> {
        Scenario::new(raw.lambda, raw.mus, raw.seed)
    }
}

impl From<Scenario> for RawScenario {
    fn from(s: Scenario) -> Self {
        RawScenario {
            lambda: s.lambda,
            mus: s.mus,
            seed: s.seed,
        }
    }
}

impl Scenario {
    pub fn new(lambda: f64, mus: Vec<MuProfile>, seed: u64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::config(format!("lambda must be positive, got {lambda}")));
        }
        if mus.is_empty() {
            return Err(Error::config("scenario needs at least one mobile user"));
        }
        Ok(Scenario { lambda, mus, seed })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mus(&self) -> &[MuProfile] {
        &self.mus
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.mus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mus.is_empty()
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Scenario::new(lambda, self.mus.clone(), self.seed)
    }

    pub fn with_mus(&self, mus: Vec<MuProfile>) -> Result<Self> {
        Scenario::new(self.lambda, mus, self.seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Scenario {
            seed,
            ..self.clone()
        }
    }
}

/// Per-user prices posted by the platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceProfile(Vec<f64>);

impl PriceProfile {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some(bad) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::domain(format!("prices must be finite and >= 0, got {bad}")));
        }
        Ok(PriceProfile(p))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for PriceProfile {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Resources contributed by each user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProfile(Vec<f64>);

impl AllocationProfile {
    /// Checks `0 <= x_n <= tau_n` against the owning scenario.
    pub fn new(x: Vec<f64>, scenario: &Scenario) -> Result<Self> {
        Error::check_len(scenario.len(), x.len())?;
        for (xn, mu) in x.iter().zip(scenario.mus()) {
            if !(xn.is_finite() && *xn >= 0.0 && *xn <= mu.tau()) {
                return Err(Error::domain(format!(
                    "allocation {xn} outside [0, {}]",
                    mu.tau()
                )));
            }
        }
        Ok(AllocationProfile(x))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for AllocationProfile {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// `b = 1 + sum_i ln(1 + x_i)`.
pub fn aggregate_b(x: &[f64]) -> Result<f64> {
    let mut b = 1.0;
    for &xi in x {
        if !(xi >= 0.0) {
            return Err(Error::domain(format!("allocation must be >= 0, got {xi}")));
        }
        b += xi.ln_1p();
    }
    Ok(b)
}

/// Platform utility `lambda * ln(b)`.
pub fn sp_utility(x: &[f64], lambda: f64) -> Result<f64> {
    Ok(lambda * aggregate_b(x)?.ln())
}

/// Platform payoff: utility minus payments `p . x`.
pub fn sp_payoff(x: &[f64], p: &[f64], lambda: f64) -> Result<f64> {
    Error::check_len(x.len(), p.len())?;
    let paid: f64 = x.iter().zip(p).map(|(xi, pi)| xi * pi).sum();
    Ok(sp_utility(x, lambda)? - paid)
}

/// Expected profit from serving own demand with `remaining` units of capacity.
pub fn mu_own_profit(mu: &MuProfile, remaining: f64) -> Result<f64> {
    if !(remaining >= 0.0 && remaining <= mu.tau) {
        return Err(Error::domain(format!(
            "remaining capacity {remaining} outside [0, {}]",
            mu.tau
        )));
    }
    Ok(mu.margin() * mu.demand.expected_min(remaining))
}

/// Payoff increment of contributing `x` units at price `p`; zero at `x = 0`.
pub fn mu_payoff(mu: &MuProfile, x: f64, p: f64) -> Result<f64> {
    if !(p >= 0.0) {
        return Err(Error::domain(format!("price must be >= 0, got {p}")));
    }
    if !(x >= 0.0 && x <= mu.tau) {
        return Err(Error::domain(format!("allocation {x} outside [0, {}]", mu.tau)));
    }
    Ok(mu_own_profit(mu, mu.tau - x)? - mu_own_profit(mu, mu.tau)? - mu.cost * x + p * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::E;

    fn mu_ref() -> MuProfile {
        MuProfile::new(20.0, 1.0, 0.0, DemandDistribution::uniform(0.0, 25.0).unwrap()).unwrap()
    }

    #[test]
    fn aggregate_b_examples() {
        assert_eq!(aggregate_b(&[0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(aggregate_b(&[E - 1.0]).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(aggregate_b(&[1.0, 1.0]).unwrap(), 2.386294361119891, epsilon = 1e-12);
        assert!(matches!(aggregate_b(&[1.0, -0.1]), Err(Error::Domain(_))));
        assert!(aggregate_b(&[f64::NAN]).is_err());
    }

    #[test]
    fn sp_utility_examples() {
        assert_eq!(sp_utility(&[0.0; 4], 50.0).unwrap(), 0.0);
        assert_abs_diff_eq!(sp_utility(&[E - 1.0], 50.0).unwrap(), 34.657359027997266, epsilon = 1e-12);
        // 50 ln(1 + 5 ln 21), evaluated independently in 50-digit arithmetic.
        assert_abs_diff_eq!(
            sp_utility(&[20.0; 5], 50.0).unwrap(),
            139.32030415537635,
            epsilon = 1e-10
        );
    }

    #[test]
    fn sp_payoff_examples() {
        assert_eq!(sp_payoff(&[0.0, 0.0], &[0.3, 7.0], 50.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            sp_payoff(&[E - 1.0], &[0.5], 50.0).unwrap(),
            34.657359027997266 - 0.5 * (E - 1.0),
            epsilon = 1e-12
        );
        let expected = 50.0 * (1.0 + 2.0 * 11f64.ln()).ln() - 20.0;
        assert_abs_diff_eq!(sp_payoff(&[10.0, 10.0], &[1.0, 1.0], 50.0).unwrap(), expected, epsilon = 1e-12);
        assert!(matches!(sp_payoff(&[1.0], &[1.0, 2.0], 50.0), Err(Error::Shape { .. })));
    }

    #[test]
    fn own_profit_examples() {
        let mu = mu_ref();
        assert_eq!(mu_own_profit(&mu, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(mu_own_profit(&mu, 20.0).unwrap(), 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mu_own_profit(&mu, 10.0).unwrap(), 8.0, epsilon = 1e-12);
        assert!(mu_own_profit(&mu, 20.5).is_err());
        assert!(mu_own_profit(&mu, -0.5).is_err());
    }

    #[test]
    fn mu_payoff_examples() {
        let mu = mu_ref();
        assert_eq!(mu_payoff(&mu, 0.0, 0.9).unwrap(), 0.0);
        assert_abs_diff_eq!(mu_payoff(&mu, 10.0, 0.6).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mu_payoff(&mu, 20.0, 1.0).unwrap(), 8.0, epsilon = 1e-12);
        assert!(mu_payoff(&mu, 5.0, -1.0).is_err());
    }

    #[test]
    fn profile_validation() {
        let d = DemandDistribution::uniform(0.0, 25.0).unwrap();
        assert!(MuProfile::new(20.0, 0.5, 0.5, d).is_err());
        assert!(MuProfile::new(20.0, 0.5, 0.6, d).is_err());
        assert!(MuProfile::new(0.0, 0.5, 0.1, d).is_err());
        assert!(MuProfile::new(20.0, 0.5, -0.1, d).is_err());
        assert!(Scenario::new(50.0, vec![], 0).is_err());
        assert!(Scenario::new(0.0, vec![mu_ref()], 0).is_err());
        assert!(PriceProfile::new(vec![0.1, -0.1]).is_err());
        assert!(PriceProfile::new(vec![0.1, f64::INFINITY]).is_err());
        let s = Scenario::new(50.0, vec![mu_ref()], 0).unwrap();
        assert!(AllocationProfile::new(vec![20.5], &s).is_err());
        assert!(AllocationProfile::new(vec![1.0, 2.0], &s).is_err());
        assert_eq!(&*AllocationProfile::new(vec![20.0], &s).unwrap(), &[20.0]);
    }

    #[test]
    fn own_profit_shape_on_grid() {
        for mu in [
            mu_ref(),
            MuProfile::new(
                15.0,
                0.8,
                0.3,
                DemandDistribution::truncated_exponential(2.0, 18.0, 0.2).unwrap(),
            )
            .unwrap(),
        ] {
            let h = mu.tau() / 99.0;
            let vals: Vec<f64> = (0..100)
                .map(|i| mu_own_profit(&mu, (i as f64 * h).min(mu.tau())).unwrap())
                .collect();
            for w in vals.windows(2) {
                assert!(w[1] - w[0] >= -1e-12);
            }
            for w in vals.windows(3) {
                assert!(w[2] - 2.0 * w[1] + w[0] <= 1e-9);
            }
        }
    }

    #[test]
    fn scenario_serde_round_trip() {
        let s = Scenario::new(50.0, vec![mu_ref(), mu_ref()], 9).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
        let bad = text.replace("\"cost\":0.0", "\"cost\":1.0");
        assert!(serde_json::from_str::<Scenario>(&bad).is_err());
    }
}
