//! How one mobile user splits its capacity as the posted price rises.
//!
//! Run with `cargo run --example best_response`.

use crowdprice::follower::{best_response, foc_residual, price_threshold};
use crowdprice::model::{mu_payoff, DemandDistribution, MuProfile};

fn main() -> crowdprice::Result<()> {
    let mu = MuProfile::new(20.0, 0.8, 0.3, DemandDistribution::uniform(0.0, 25.0)?)?;
    println!("tau = {}, delta = {}, cost = {}", mu.tau(), mu.delta(), mu.cost());
    println!("participation threshold p~ = {:.6}\n", price_threshold(&mu));

    println!("{:>6} {:>14} {:>10} {:>10} {:>12}", "price", "region", "x*", "dx/dp", "payoff");
    for k in 0..=10 {
        let p = 0.1 * k as f64;
        let br = best_response(&mu, p)?;
        println!(
            "{:>6.2} {:>14} {:>10.4} {:>10.4} {:>12.6}",
            p,
            format!("{:?}", br.region),
            br.x_star,
            br.dx_dp,
            mu_payoff(&mu, br.x_star, p)?
        );
    }

    // Inside the participation region the first-order condition holds.
    let br = best_response(&mu, 0.6)?;
    println!("\nFOC residual at p = 0.6: {:.3e}", foc_residual(&mu, br.x_star, 0.6));

    // A truncated-exponential demand gives the response curvature as well.
    let skewed = MuProfile::new(20.0, 0.8, 0.3, DemandDistribution::truncated_exponential(0.0, 25.0, 0.1)?)?;
    let br = best_response(&skewed, 0.6)?;
    println!(
        "exponential demand at p = 0.6: x* = {:.4}, dx/dp = {:.4}, d2x/dp2 = {:.4}",
        br.x_star, br.dx_dp, br.d2x_dp2
    );
    Ok(())
}
