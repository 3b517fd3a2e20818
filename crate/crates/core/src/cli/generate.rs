//! Random scenario generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DemandDistribution, MuProfile, Scenario};

const MAX_REJECTIONS: usize = 100_000;

/// A parameter that is either fixed or drawn uniformly from `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Draw {
    Fixed(f64),
    Range([f64; 2]),
}

impl Draw {
    fn bounds(&self) -> (f64, f64) {
        match *self {
            Draw::Fixed(v) => (v, v),
            Draw::Range([a, b]) => (a, b),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Draw::Fixed(v) => v,
            Draw::Range([a, b]) => a + (b - a) * rng.random::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSpec {
    pub n_mus: usize,
    pub lambda: f64,
    pub tau: f64,
    pub demand_lo: f64,
    pub demand_hi: f64,
    pub cost: Draw,
    pub delta: Draw,
}

impl Default for GenerationSpec {
    /// Five users, 20 units of capacity, demand uniform on `[0, 25]`, cost and
    /// own-demand revenue drawn from `[0, 1]` with revenue above cost.
    fn default() -> Self {
        GenerationSpec {
            n_mus: 5,
            lambda: 50.0,
            tau: 20.0,
            demand_lo: 0.0,
            demand_hi: 25.0,
            cost: Draw::Range([0.0, 1.0]),
            delta: Draw::Range([0.0, 1.0]),
        }
    }
}

impl GenerationSpec {
    /// Zero cost, revenue drawn from `(0, 1]`.
    pub fn varying_delta() -> Self {
        GenerationSpec {
            cost: Draw::Fixed(0.0),
            ..Self::default()
        }
    }

    /// Unit revenue, cost drawn from `[0, 1)`.
    pub fn varying_cost() -> Self {
        GenerationSpec {
            delta: Draw::Fixed(1.0),
            ..Self::default()
        }
    }

    /// Demand upper bound sweep setting.
    pub fn varying_demand_upper() -> Self {
        GenerationSpec {
            lambda: 30.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mus == 0 {
            return Err(Error::config("n_mus must be >= 1"));
        }
        for (name, d) in [("cost", self.cost), ("delta", self.delta)] {
            let (a, b) = d.bounds();
            if !(a.is_finite() && b.is_finite()) || a > b || a < 0.0 {
                return Err(Error::config(format!("{name} range [{a}, {b}] is invalid")));
            }
        }
        let (c_lo, _) = self.cost.bounds();
        let (_, d_hi) = self.delta.bounds();
        if c_lo >= d_hi {
            return Err(Error::config(format!(
                "no draw can satisfy delta > cost: cost >= {c_lo} but delta <= {d_hi}"
            )));
        }
        DemandDistribution::uniform(self.demand_lo, self.demand_hi)?;
        if !(self.tau > 0.0) || !(self.lambda > 0.0) {
            return Err(Error::config("tau and lambda must be positive"));
        }
        Ok(())
    }
}

/// Draws a scenario; cost and revenue pairs are redrawn until revenue exceeds cost.
pub fn generate_scenario(spec: &GenerationSpec, seed: u64) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let demand = DemandDistribution::uniform(spec.demand_lo, spec.demand_hi)?;
    let mut mus = Vec::with_capacity(spec.n_mus);
    for n in 0..spec.n_mus {
        let mut drawn = None;
        for _ in 0..MAX_REJECTIONS {
            let cost = spec.cost.sample(&mut rng);
            let delta = spec.delta.sample(&mut rng);
            if delta > cost {
                drawn = Some((cost, delta));
                break;
            }
        }
        let (cost, delta) = drawn.ok_or_else(|| {
            Error::config(format!("could not draw delta > cost for user {n} after {MAX_REJECTIONS} tries"))
        })?;
        mus.push(MuProfile::new(spec.tau, delta, cost, demand)?);
    }
    Scenario::new(spec.lambda, mus, seed)
}
