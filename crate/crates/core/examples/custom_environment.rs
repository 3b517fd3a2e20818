//! The learner only sees [`PricingEnvironment`], so it can be pointed at any
//! pricing problem. Here a single seller faces linear demand `q = 10 - 8p`
//! with unit cost 0.25; profit `(p - 0.25) q` peaks at `p = 0.75` with value 2.
//!
//! Run with `cargo run --release --example custom_environment`.

use crowdprice::dynamics::{Feedback, PricingEnvironment};
use crowdprice::learner::{train, TrainConfig};

struct LinearDemand {
    last: [f64; 2],
}

impl PricingEnvironment for LinearDemand {
    fn num_prices(&self) -> usize {
        1
    }

    fn observation_dim(&self) -> usize {
        2
    }

    fn price_cap(&self) -> f64 {
        1.0
    }

    fn observe(&self) -> Vec<f64> {
        self.last.to_vec()
    }

    fn step(&mut self, action: &[f64]) -> crowdprice::Result<Feedback> {
        let p = action[0].clamp(0.0, 1.0);
        let q = (10.0 - 8.0 * p).max(0.0);
        let profit = (p - 0.25) * q;
        self.last = [p, q];
        Ok(Feedback {
            observation: self.observe(),
            reward: profit,
            sp_payoff: profit,
            applied_action: vec![p],
            observed_allocations: vec![q],
            clamped: p != action[0],
        })
    }
}

fn main() -> crowdprice::Result<()> {
    let mut env = LinearDemand { last: [0.5, 6.0] };
    let cfg = TrainConfig {
        episodes: 200,
        ..TrainConfig::default()
    };
    let outcome = train(&mut env, &cfg)?;
    let last = outcome.trace.last().expect("episodes > 0");
    println!(
        "mean price in the last episode {:.3} (best 0.75), profit {:.3} (best 2.000)",
        last.mean_prices[0], last.mean_sp_payoff
    );
    Ok(())
}
