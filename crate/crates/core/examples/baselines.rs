//! Play the repeated game with fixed pricing rules: greedy, random and the
//! static equilibrium price.
//!
//! Run with `cargo run --release --example baselines`.

use crowdprice::cli::{generate_scenario, GenerationSpec};
use crowdprice::dynamics::{rollout_baseline, rollout_fixed, Baseline, EnvConfig};
use crowdprice::leader::{compute_se, SolverConfig};

fn main() -> crowdprice::Result<()> {
    let scenario = generate_scenario(&GenerationSpec::default(), 42)?;
    let env = EnvConfig::default();
    let steps = 1000;

    let (greedy, _) = rollout_baseline(&scenario, &env, Baseline::Greedy, steps, 7)?;
    let (random, _) = rollout_baseline(&scenario, &env, Baseline::Random, steps, 7)?;
    let se = compute_se(&scenario, &SolverConfig::default())?;
    let (fixed, transitions) = rollout_fixed(&scenario, &env, &se.p_star, steps)?;

    println!("mean platform payoff over {steps} rounds");
    println!("  greedy (price = p_max) {:>10.4}", greedy.mean_sp_payoff);
    println!("  random                 {:>10.4}", random.mean_sp_payoff);
    println!("  equilibrium price      {:>10.4}", fixed.mean_sp_payoff);
    println!("  solver payoff          {:>10.4}", se.sp_payoff);

    let last = transitions.last().expect("steps > 0");
    println!("\nstate after the last round (oldest first): {:?}", last.next_state.flatten());
    Ok(())
}
