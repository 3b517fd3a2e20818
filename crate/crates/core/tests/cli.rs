use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use crowdprice::leader::induced_payoff;
use crowdprice::model::{DemandDistribution, MuProfile, Scenario};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_crowdprice")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn run_in(dir: &Path, sub: &str, cfg: &Path, extra: &[&str]) -> (i32, String, String) {
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

/// File name to content for every file in `dir`.
fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn manifest_hashes(dir: &Path) -> BTreeMap<String, String> {
    let m: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    m["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| (a["file"].as_str().unwrap().to_string(), a["sha256"].as_str().unwrap().to_string()))
        .collect()
}

fn csv(dir: &Path, name: &str) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join(name))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const SHORT_TRAIN: [&str; 8] = [
    "--set",
    "train.episodes=3",
    "--set",
    "train.batch_steps=16",
    "--set",
    "eval.baseline_steps=20",
    "--set",
    "eval.tail_window=2",
];

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for (sub, cfg, extra) in [
        ("static", "baseline.toml", &["--svg", "on"][..]),
        ("sweep", "sweep_delta.toml", &["--svg", "on"][..]),
        ("train", "baseline.toml", &SHORT_TRAIN[..]),
    ] {
        let a = tmp.path().join(format!("{sub}_a"));
        let b = tmp.path().join(format!("{sub}_b"));
        let mut extra = extra.to_vec();
        extra.extend(["--steps-trace", "on"]);
        assert_eq!(run_in(&a, sub, &config(cfg), &extra).0, 0, "{sub}");
        assert_eq!(run_in(&b, sub, &config(cfg), &extra).0, 0, "{sub}");
        let (fa, fb) = (files(&a), files(&b));
        for (name, bytes) in &fa {
            if name != "manifest.json" {
                assert_eq!(Some(bytes), fb.get(name), "{sub}: {name} differs");
            }
        }
        assert_eq!(manifest_hashes(&a), manifest_hashes(&b), "{sub}");
        // The manifest lists every other file with its hash.
        assert_eq!(manifest_hashes(&a).len(), fa.len() - 1, "{sub}");
    }
}

#[test]
fn seed_flag_changes_training_output() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let mut extra = SHORT_TRAIN.to_vec();
    run_in(&a, "train", &config("baseline.toml"), &extra);
    extra.extend(["--seed", "5"]);
    run_in(&b, "train", &config("baseline.toml"), &extra);
    assert_ne!(files(&a)["training_trace.csv"], files(&b)["training_trace.csv"]);
    // The scenario is pinned by scenario_seed and does not move with --seed.
    assert_eq!(files(&a)["scenario.json"], files(&b)["scenario.json"]);
}

#[test]
fn config_errors_exit_2_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seed = 1\n[solver]\ntol = 1e-8\n").unwrap();
    let out = tmp.path().join("out");
    let (code, _, err) = run_in(&out, "static", &bad, &[]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("scenario"), "{err}");
    assert!(!out.exists());

    let (code, _, _) = run_in(&out, "static", &tmp.path().join("missing.toml"), &[]);
    assert_eq!(code, 2);
    let (code, _, _) = run_in(&out, "train", &config("baseline.toml"), &["--set", "train.epsilon=3"]);
    assert_eq!(code, 2);
    let (code, _, _) = run_in(&out, "static", &config("baseline.toml"), &["--svg", "maybe"]);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn iteration_cap_exits_3_with_best_iterate() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, err) = run_in(tmp.path(), "static", &config("baseline.toml"), &["--set", "solver.max_iters=1"]);
    assert_eq!(code, 3, "{err}");
    let summary = csv(tmp.path(), "equilibrium_summary.csv");
    assert_eq!(summary[1][4], "false");
    let m: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["exit_code"], 3);
}

#[test]
fn single_user_price_matches_grid_search() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(tmp.path(), "static", &config("single_user.toml"), &[]).0, 0);
    let rows = csv(tmp.path(), "equilibrium.csv");
    assert_eq!(
        rows[0],
        ["mu", "tau", "delta", "cost", "price_threshold", "p_star", "x_star", "mu_payoff", "marginal_utility"]
    );
    let p_star: f64 = rows[1][5].parse().unwrap();
    let payoff: f64 = csv(tmp.path(), "equilibrium_summary.csv")[1][0].parse().unwrap();

    let mu = MuProfile::new(20.0, 1.0, 0.0, DemandDistribution::uniform(0.0, 25.0).unwrap()).unwrap();
    let s = Scenario::new(50.0, vec![mu], 0).unwrap();
    let (p_grid, u_grid) = (0..=8000)
        .map(|k| 0.2 + 1e-4 * k as f64)
        .map(|p| (p, induced_payoff(&s, &[p]).unwrap()))
        .fold((0.0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
    assert!((p_star - p_grid).abs() <= 1e-3, "{p_star} vs {p_grid}");
    assert!((payoff - u_grid).abs() <= 1e-4, "{payoff} vs {u_grid}");
}

#[test]
fn sweep_has_one_row_per_user_target_and_value() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run_in(tmp.path(), "sweep", &config("sweep_delta.toml"), &[]).0, 0);
    let rows = csv(tmp.path(), "sweep.csv");
    assert_eq!(rows[0], ["axis", "target_mu", "value", "mu", "p", "x", "mu_payoff"]);
    assert_eq!(rows.len() - 1, 5 * 5 * 5);
    assert_eq!(csv(tmp.path(), "sweep_summary.csv").len() - 1, 5 * 5);
}

#[test]
fn training_writes_trace_baselines_and_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let mut extra = SHORT_TRAIN.to_vec();
    extra.extend(["--steps-trace", "on", "--svg", "on"]);
    let (code, _, err) = run_in(tmp.path(), "train", &config("baseline.toml"), &extra);
    assert_eq!(code, 0, "{err}");
    assert_eq!(csv(tmp.path(), "training_trace.csv").len() - 1, 3);
    assert_eq!(csv(tmp.path(), "steps_trace.csv").len() - 1, 3 * 16);
    let policies: Vec<String> = csv(tmp.path(), "baselines.csv")[1..].iter().map(|r| r[0].clone()).collect();
    assert_eq!(policies, ["greedy", "random", "static_se", "drl_late"]);
    let text = fs::read_to_string(tmp.path().join("policy.ckpt")).unwrap();
    let (_, echo) = crowdprice::learner::read_checkpoint(&text).unwrap();
    assert!(echo.contains("\"episodes\":3"), "{echo}");
    for svg in ["prices.svg", "allocations.svg", "sp_payoff.svg", "mu_payoffs.svg"] {
        assert!(tmp.path().join(svg).exists(), "{svg}");
    }
}

#[test]
fn gradcheck_detects_a_corrupted_gradient() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, out, _) = run(&["gradcheck", "--out", tmp.path().to_str().unwrap(), "--probes", "3"]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(csv(tmp.path(), "gradcheck.csv").len() - 1, 6);
    for name in ["leader_gradient", "mlp_actor_backprop", "ppo_surrogate_gradient", "critic_loss_gradient"] {
        let (code, _, err) = run(&["gradcheck", "--probes", "3", "--corrupt", name]);
        assert_eq!(code, 4, "{name}");
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn commands_write_only_inside_their_output_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("nested/run");
    assert_eq!(run_in(&out, "static", &config("baseline.toml"), &["--svg", "on"]).0, 0);
    let top: Vec<_> = fs::read_dir(tmp.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(top, ["nested"]);
    assert!(fs::read_dir(&out).unwrap().all(|e| e.unwrap().file_type().unwrap().is_file()));
    assert!(out.join("manifest.json").exists());
}
