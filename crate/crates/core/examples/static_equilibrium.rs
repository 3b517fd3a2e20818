//! Solve the static pricing game for a randomly drawn five-user scenario.
//!
//! Run with `cargo run --release --example static_equilibrium [scenario_seed]`.

use crowdprice::cli::{generate_scenario, GenerationSpec};
use crowdprice::follower::price_threshold;
use crowdprice::leader::{compute_se, marginal_utilities, sp_payoff_hessian_parts, SolverConfig};

fn main() -> crowdprice::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    let scenario = generate_scenario(&GenerationSpec::default(), seed)?;
    let se = compute_se(&scenario, &SolverConfig::default())?;
    let bound = marginal_utilities(&scenario, &se.x_star)?;

    println!("scenario seed {seed}, lambda {}", scenario.lambda());
    println!("{:>3} {:>8} {:>8} {:>8} {:>10} {:>10} {:>10} {:>10}", "n", "cost", "delta", "p~", "p*", "x*", "U_n", "g'/(1+x)");
    for (n, mu) in scenario.mus().iter().enumerate() {
        println!(
            "{:>3} {:>8.4} {:>8.4} {:>8.4} {:>10.6} {:>10.4} {:>10.5} {:>10.6}",
            n + 1,
            mu.cost(),
            mu.delta(),
            price_threshold(mu),
            se.p_star[n],
            se.x_star[n],
            se.mu_payoffs[n],
            bound[n]
        );
    }
    println!("\nplatform payoff {:.6}", se.sp_payoff);
    println!(
        "{} iterations, projected-gradient residual {:.2e}, spread over starts {:.2e}",
        se.iterations, se.grad_residual, se.multistart_spread
    );

    // Curvature at the midpoint of the price box.
    let mid: Vec<f64> = scenario
        .mus()
        .iter()
        .map(|mu| 0.5 * (price_threshold(mu) + mu.delta()))
        .collect();
    let h = sp_payoff_hessian_parts(&scenario, &mid)?;
    let v = vec![1.0; scenario.len()];
    println!("v^T H v at the box midpoint, v = 1: {:.4}", h.quadratic_form(&v));
    Ok(())
}
