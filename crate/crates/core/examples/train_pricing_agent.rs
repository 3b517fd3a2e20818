//! Train the PPO pricing agent on the five-user scenario and compare it with
//! the static equilibrium and the fixed baselines.
//!
//! Run with `cargo run --release --example train_pricing_agent [episodes] [seed]`.
//! The full 500-episode run takes about 20 seconds.

use crowdprice::cli::{generate_scenario, GenerationSpec};
use crowdprice::dynamics::{rollout_baseline, Baseline, EnvConfig};
use crowdprice::learner::{read_checkpoint, tail_mean_payoff, write_checkpoint, TrainConfig};
use crowdprice::leader::{compute_se, SolverConfig};

fn main() -> crowdprice::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes = args.next().and_then(|s| s.parse().ok()).unwrap_or(500);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let scenario = generate_scenario(&GenerationSpec::default(), 42)?;
    let env = EnvConfig::default();
    let cfg = TrainConfig {
        episodes,
        seed,
        ..TrainConfig::default()
    };
    let se = compute_se(&scenario, &SolverConfig::default())?;
    let greedy = rollout_baseline(&scenario, &env, Baseline::Greedy, 1000, seed)?.0;
    let random = rollout_baseline(&scenario, &env, Baseline::Random, 1000, seed)?.0;

    let outcome = crowdprice::train(&scenario, &env, &cfg)?;
    for t in outcome.trace.iter().filter(|t| t.episode % 50 == 0 || t.episode + 1 == episodes) {
        let p: Vec<String> = t.mean_prices.iter().map(|v| format!("{v:.3}")).collect();
        println!(
            "episode {:>4}  payoff {:>8.3}  log-std {:>6.2}  prices [{}]",
            t.episode,
            t.mean_sp_payoff,
            t.mean_log_std,
            p.join(" ")
        );
    }

    let late = tail_mean_payoff(&outcome.trace, 50);
    println!("\nlast 50 episodes: {late:.3} ({:.1}% of equilibrium {:.3})", 100.0 * late / se.sp_payoff, se.sp_payoff);
    println!("greedy {:.3}, random {:.3}", greedy.mean_sp_payoff, random.mean_sp_payoff);
    let p: Vec<String> = se.p_star.iter().map(|v| format!("{v:.3}")).collect();
    println!("equilibrium prices [{}]", p.join(" "));

    // Checkpoints reload bit for bit.
    let text = write_checkpoint(&outcome.policy, "{\"example\":true}");
    let (reloaded, _) = read_checkpoint(&text)?;
    assert_eq!(reloaded, outcome.policy);
    println!("checkpoint: {} bytes", text.len());
    Ok(())
}
