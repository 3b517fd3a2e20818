//! Compare every analytic derivative with central finite differences.
//!
//! Run with `cargo run --release --example gradient_check [seed]`.

use crowdprice::gradcheck::{run_gradcheck, GradcheckOptions};

fn main() -> crowdprice::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let results = run_gradcheck(&GradcheckOptions {
        seed,
        probes: 20,
        corrupt: None,
    })?;
    for r in &results {
        println!(
            "{:<26} max rel err {:>10.3e}  (tol {:.0e})  {}",
            r.name,
            r.max_rel_err,
            r.tolerance,
            if r.passed { "ok" } else { "FAILED" }
        );
    }
    if results.iter().any(|r| !r.passed) {
        std::process::exit(1);
    }
    Ok(())
}
