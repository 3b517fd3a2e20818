//! Equilibrium trends as one parameter moves with everything else held fixed.
//!
//! Run with `cargo run --release --example comparative_statics`.

use crowdprice::cli::{sweep_points, Draw, GenerationSpec, RunConfig, ScenarioSource, SweepAxis, SweepConfig, SweepMode};

fn config(spec: GenerationSpec, axis: SweepAxis, values: Vec<f64>, targets: Vec<usize>) -> RunConfig {
    let text = "scenario_seed = 42\n[scenario]\nsource = \"generate\"\n";
    let mut cfg = RunConfig::from_toml(text, &[], None).expect("static config");
    cfg.scenario = ScenarioSource::Generate(spec);
    cfg.sweep = SweepConfig {
        axis,
        values,
        targets,
        joint: false,
        mode: SweepMode::Static,
    };
    cfg
}

fn main() -> crowdprice::Result<()> {
    let cfg = config(GenerationSpec::varying_delta(), SweepAxis::Delta, vec![0.2, 0.4, 0.6, 0.8, 1.0], vec![0]);
    println!("user 1 revenue delta (cost 0):");
    for p in sweep_points(&cfg)? {
        println!("  delta {:.1}: p* {:.5}  x* {:.4}", p.value, p.prices[0], p.allocations[0]);
    }

    let cfg = config(GenerationSpec::varying_cost(), SweepAxis::Cost, vec![0.0, 0.2, 0.4, 0.6, 0.8], vec![0]);
    println!("user 1 cost (delta 1):");
    for p in sweep_points(&cfg)? {
        println!("  cost {:.1}: p* {:.5}  x* {:.4}", p.value, p.prices[0], p.allocations[0]);
    }

    let spec = GenerationSpec {
        cost: Draw::Range([0.0, 1.0]),
        ..GenerationSpec::varying_demand_upper()
    };
    let cfg = config(spec.clone(), SweepAxis::DemandUpper, vec![20.0, 25.0, 30.0], vec![4]);
    println!("user 5 upper demand bound (lambda 30):");
    for p in sweep_points(&cfg)? {
        println!("  {:.0}: payoff {:.4}  p* {:.5}  x* {:.4}", p.value, p.sp_payoff, p.prices[4], p.allocations[4]);
    }

    let mut cfg = config(spec, SweepAxis::DemandUpper, vec![20.0, 25.0, 30.0], vec![]);
    cfg.sweep.joint = true;
    println!("upper demand bound for every user at once (lambda 30):");
    for p in sweep_points(&cfg)? {
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        println!("  {:.0}: payoff {:.4}  p* [{}]  x* [{}]", p.value, p.sp_payoff, fmt(&p.prices), fmt(&p.allocations));
    }
    Ok(())
}
