//! The four commands. Each builds its artifacts in memory; nothing touches
//! the disk until the caller writes them out.

use crate::cli::config::{apply_axis, RunConfig, SweepMode};
use crate::cli::manifest::Artifact;
use crate::cli::{EXIT_NOT_CONVERGED, EXIT_NUMERIC};
use crate::dynamics::{rollout_baseline, Baseline, Environment, RolloutSummary, Transition};
use crate::error::{Error, Result};
use crate::follower::price_threshold;
use crate::gradcheck::{run_gradcheck, CheckResult, GradcheckOptions};
use crate::leader::{compute_se, marginal_utilities, EquilibriumResult};
use crate::learner::{self, tail_mean_payoff, write_checkpoint, EpisodeTrace, TrainOutcome};
use crate::model::Scenario;
use crate::report::{csv_document, fmt_num, indexed, push_nums};
use crate::svg::{bar_chart, line_chart, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutputOptions {
    pub svg: bool,
    pub steps_trace: bool,
}

/// Files to write plus what to report.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub artifacts: Vec<Artifact>,
    pub exit_code: i32,
    pub notes: Vec<String>,
    /// Human-readable summary for stdout.
    pub summary: String,
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Runs the solver, keeping the best iterate when it stops at the cap.
fn solve(scenario: &Scenario, cfg: &RunConfig) -> Result<(EquilibriumResult, bool)> {
    match compute_se(scenario, &cfg.solver) {
        Ok(se) => Ok((se, true)),
        Err(Error::NotConverged { best }) => Ok((*best, false)),
        Err(e) => Err(e),
    }
}

fn equilibrium_csv(scenario: &Scenario, se: &EquilibriumResult) -> Result<String> {
    let header = strings(&[
        "mu",
        "tau",
        "delta",
        "cost",
        "price_threshold",
        "p_star",
        "x_star",
        "mu_payoff",
        "marginal_utility",
    ]);
    let mu_bound = marginal_utilities(scenario, &se.x_star)?;
    let rows = scenario
        .mus()
        .iter()
        .enumerate()
        .map(|(n, mu)| {
            let mut row = vec![(n + 1).to_string()];
            push_nums(
                &mut row,
                &[
                    mu.tau(),
                    mu.delta(),
                    mu.cost(),
                    price_threshold(mu),
                    se.p_star[n],
                    se.x_star[n],
                    se.mu_payoffs[n],
                    mu_bound[n],
                ],
            );
            row
        })
        .collect::<Vec<_>>();
    Ok(csv_document(&header, &rows))
}

fn equilibrium_summary_csv(se: &EquilibriumResult, converged: bool) -> String {
    let header = strings(&["sp_payoff", "iterations", "grad_residual", "multistart_spread", "converged"]);
    let row = vec![
        fmt_num(se.sp_payoff),
        se.iterations.to_string(),
        fmt_num(se.grad_residual),
        fmt_num(se.multistart_spread),
        converged.to_string(),
    ];
    csv_document(&header, &[row])
}

fn scenario_json(scenario: &Scenario) -> String {
    serde_json::to_string_pretty(scenario).expect("scenario serialises") + "\n"
}

pub fn cmd_static(cfg: &RunConfig, opts: OutputOptions) -> Result<CommandOutput> {
    let scenario = cfg.build_scenario()?;
    let (se, converged) = solve(&scenario, cfg)?;
    let mut artifacts = vec![
        Artifact::new("scenario.json", scenario_json(&scenario)),
        Artifact::new("equilibrium.csv", equilibrium_csv(&scenario, &se)?),
        Artifact::new("equilibrium_summary.csv", equilibrium_summary_csv(&se, converged)),
    ];
    if opts.svg {
        let cats: Vec<String> = (1..=scenario.len()).map(|n| format!("MU {n}")).collect();
        artifacts.push(Artifact::new(
            "equilibrium_prices.svg",
            bar_chart("Equilibrium prices", "price", &cats, &[("p*".into(), se.p_star.clone())]),
        ));
        artifacts.push(Artifact::new(
            "equilibrium_allocations.svg",
            bar_chart("Equilibrium contributions", "units", &cats, &[("x*".into(), se.x_star.clone())]),
        ));
    }
    let mut notes = Vec::new();
    let exit_code = if converged {
        0
    } else {
        notes.push(format!(
            "solver stopped at the iteration cap; residual {:.3e}; best iterate written",
            se.grad_residual
        ));
        EXIT_NOT_CONVERGED
    };
    let summary = format!(
        "SP payoff {:.6}\np* = {:?}\nx* = {:?}\niterations {}, residual {:.3e}, multistart spread {:.3e}",
        se.sp_payoff, se.p_star, se.x_star, se.iterations, se.grad_residual, se.multistart_spread
    );
    Ok(CommandOutput {
        artifacts,
        exit_code,
        notes,
        summary,
    })
}

/// Training run with every transition kept.
pub fn train_logged(scenario: &Scenario, cfg: &RunConfig) -> Result<(TrainOutcome, Vec<Transition>)> {
    let mut env = Environment::new(scenario.clone(), cfg.env.clone(), cfg.train.seed)?.record_transitions();
    let outcome = learner::train(&mut env, &cfg.train)?;
    Ok((outcome, env.take_log()))
}

fn mean_mu_payoffs(transitions: &[Transition], n: usize) -> Vec<f64> {
    let k = transitions.len().max(1) as f64;
    let mut out = vec![0.0; n];
    for t in transitions {
        for (acc, u) in out.iter_mut().zip(&t.mu_payoffs) {
            *acc += u;
        }
    }
    out.iter().map(|v| v / k).collect()
}

/// Averages of the last `window` episodes, in the shape of a baseline rollout.
pub fn late_training_summary(trace: &[EpisodeTrace], log: &[Transition], steps: usize, window: usize) -> RolloutSummary {
    let tail = &trace[trace.len().saturating_sub(window)..];
    let k = tail.len().max(1) as f64;
    let n = tail.first().map_or(0, |t| t.mean_prices.len());
    let avg = |f: &dyn Fn(&EpisodeTrace) -> &[f64]| -> Vec<f64> {
        (0..n).map(|i| tail.iter().map(|t| f(t)[i]).sum::<f64>() / k).collect()
    };
    let log_tail = &log[log.len().saturating_sub(tail.len() * steps)..];
    RolloutSummary {
        mean_sp_payoff: tail_mean_payoff(trace, window),
        mean_reward: tail.iter().map(|t| t.mean_reward).sum::<f64>() / k,
        mean_mu_payoffs: mean_mu_payoffs(log_tail, n),
        mean_prices: avg(&|t| &t.mean_prices),
        mean_allocations: avg(&|t| &t.mean_allocations),
    }
}

fn baseline_row(name: &str, s: &RolloutSummary) -> Vec<String> {
    let mut row = vec![name.to_string()];
    push_nums(&mut row, &[s.mean_sp_payoff, s.mean_reward]);
    push_nums(&mut row, &s.mean_prices);
    push_nums(&mut row, &s.mean_allocations);
    push_nums(&mut row, &s.mean_mu_payoffs);
    row
}

fn baselines_header(n: usize) -> Vec<String> {
    let mut h = strings(&["policy", "mean_sp_payoff", "mean_reward"]);
    h.extend(indexed("mean_p", n));
    h.extend(indexed("mean_x", n));
    h.extend(indexed("mean_mu_payoff", n));
    h
}

/// The static equilibrium as a constant policy.
fn se_summary(se: &EquilibriumResult, reward_scale: f64) -> RolloutSummary {
    RolloutSummary {
        mean_sp_payoff: se.sp_payoff,
        mean_reward: reward_scale * se.sp_payoff,
        mean_mu_payoffs: se.mu_payoffs.clone(),
        mean_prices: se.p_star.clone(),
        mean_allocations: se.x_star.clone(),
    }
}

fn per_mu_series(trace: &[EpisodeTrace], n: usize, prefix: &str, pick: impl Fn(&EpisodeTrace) -> &[f64]) -> Vec<Series> {
    (0..n)
        .map(|i| {
            Series::new(
                format!("{prefix}{}", i + 1),
                trace.iter().map(|t| (t.episode as f64, pick(t)[i])).collect(),
            )
        })
        .collect()
}

fn flat_line(label: String, x_max: f64, y: f64) -> Series {
    Series::new(label, vec![(0.0, y), (x_max, y)]).dashed()
}

pub fn cmd_train(cfg: &RunConfig, opts: OutputOptions) -> Result<CommandOutput> {
    let scenario = cfg.build_scenario()?;
    let n = scenario.len();
    let (se, converged) = solve(&scenario, cfg)?;
    if !converged {
        return Err(Error::NotConverged { best: Box::new(se) });
    }
    let steps = cfg.eval.baseline_steps;
    let greedy = rollout_baseline(&scenario, &cfg.env, Baseline::Greedy, steps, cfg.seed)?.0;
    let random = rollout_baseline(&scenario, &cfg.env, Baseline::Random, steps, cfg.seed)?.0;
    let echo = cfg.echo().to_string();

    let (outcome, log) = match train_logged(&scenario, cfg) {
        Ok(v) => v,
        Err(Error::Diverged {
            episode,
            message,
            snapshot,
        }) => {
            return Ok(CommandOutput {
                artifacts: vec![Artifact::new("diverged_policy.ckpt", write_checkpoint(&snapshot, &echo))],
                exit_code: EXIT_NUMERIC,
                notes: vec![format!(
                    "training diverged at episode {episode}: {message}; snapshot in diverged_policy.ckpt"
                )],
                summary: format!("training diverged at episode {episode}: {message}"),
            });
        }
        Err(e) => return Err(e),
    };
    let trace = &outcome.trace;
    let d = cfg.train.batch_steps;

    let mut header = EpisodeTrace::csv_header(n);
    header.extend(indexed("mean_mu_payoff", n));
    let rows: Vec<Vec<String>> = trace
        .iter()
        .zip(log.chunks(d))
        .map(|(t, chunk)| {
            let mut row = t.csv_row();
            push_nums(&mut row, &mean_mu_payoffs(chunk, n));
            row
        })
        .collect();

    let drl = late_training_summary(trace, &log, d, cfg.eval.tail_window);
    let baselines = csv_document(
        &baselines_header(n),
        &[
            baseline_row("greedy", &greedy),
            baseline_row("random", &random),
            baseline_row("static_se", &se_summary(&se, cfg.env.reward_scale)),
            baseline_row("drl_late", &drl),
        ],
    );

    let mut artifacts = vec![
        Artifact::new("scenario.json", scenario_json(&scenario)),
        Artifact::new("equilibrium.csv", equilibrium_csv(&scenario, &se)?),
        Artifact::new("training_trace.csv", csv_document(&header, &rows)),
        Artifact::new("baselines.csv", baselines),
        Artifact::new("policy.ckpt", write_checkpoint(&outcome.policy, &echo)),
    ];
    if opts.steps_trace {
        let step_rows: Vec<Vec<String>> = log
            .iter()
            .enumerate()
            .map(|(i, t)| t.csv_row(i / d, i % d))
            .collect();
        artifacts.push(Artifact::new(
            "steps_trace.csv",
            csv_document(&Transition::csv_header(n), &step_rows),
        ));
    }
    if opts.svg {
        let x_max = trace.len().saturating_sub(1) as f64;
        let mut prices = per_mu_series(trace, n, "p", |t| &t.mean_prices);
        prices.extend((0..n).map(|i| flat_line(format!("p*{}", i + 1), x_max, se.p_star[i])));
        let mut allocs = per_mu_series(trace, n, "x", |t| &t.mean_allocations);
        allocs.extend((0..n).map(|i| flat_line(format!("x*{}", i + 1), x_max, se.x_star[i])));
        let payoff = vec![
            Series::new("DRL", trace.iter().map(|t| (t.episode as f64, t.mean_sp_payoff)).collect()),
            flat_line("static SE".into(), x_max, se.sp_payoff),
            flat_line("greedy".into(), x_max, greedy.mean_sp_payoff),
            flat_line("random".into(), x_max, random.mean_sp_payoff),
        ];
        let mu_series: Vec<Series> = (0..n)
            .map(|i| {
                Series::new(
                    format!("U{}", i + 1),
                    log.chunks(d)
                        .enumerate()
                        .map(|(e, chunk)| (e as f64, mean_mu_payoffs(chunk, n)[i]))
                        .collect(),
                )
            })
            .collect();
        artifacts.push(Artifact::new("prices.svg", line_chart("Prices", "episode", "mean price", &prices)));
        artifacts.push(Artifact::new(
            "allocations.svg",
            line_chart("Contributions", "episode", "mean units", &allocs),
        ));
        artifacts.push(Artifact::new(
            "sp_payoff.svg",
            line_chart("Platform payoff", "episode", "mean payoff", &payoff),
        ));
        artifacts.push(Artifact::new(
            "mu_payoffs.svg",
            line_chart("User payoffs", "episode", "mean payoff", &mu_series),
        ));
    }
    let summary = format!(
        "late-training SP payoff {:.4} ({:.1}% of static SE {:.4}); greedy {:.4}; random {:.4}",
        drl.mean_sp_payoff,
        100.0 * drl.mean_sp_payoff / se.sp_payoff,
        se.sp_payoff,
        greedy.mean_sp_payoff,
        random.mean_sp_payoff
    );
    Ok(CommandOutput {
        artifacts,
        exit_code: 0,
        notes: Vec::new(),
        summary,
    })
}

/// One evaluated sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub target: Option<usize>,
    pub value: f64,
    pub prices: Vec<f64>,
    pub allocations: Vec<f64>,
    pub mu_payoffs: Vec<f64>,
    pub sp_payoff: f64,
    pub converged: bool,
}

/// Evaluates every (target, value) pair of the configured sweep.
pub fn sweep_points(cfg: &RunConfig) -> Result<Vec<SweepPoint>> {
    let base = cfg.build_scenario()?;
    let sweep = &cfg.sweep;
    let targets: Vec<Option<usize>> = if sweep.axis.is_per_user() && !sweep.joint {
        if sweep.targets.is_empty() {
            (0..base.len()).map(Some).collect()
        } else {
            if let Some(t) = sweep.targets.iter().find(|t| **t >= base.len()) {
                return Err(Error::config(format!("sweep target {t} but the scenario has {} users", base.len())));
            }
            sweep.targets.iter().copied().map(Some).collect()
        }
    } else {
        vec![None]
    };
    let mut points = Vec::new();
    for &target in &targets {
        for &value in &sweep.values {
            let scenario = apply_axis(&base, sweep.axis, target, value)?;
            let point = match sweep.mode {
                SweepMode::Static => {
                    let (se, converged) = solve(&scenario, cfg)?;
                    SweepPoint {
                        target,
                        value,
                        prices: se.p_star,
                        allocations: se.x_star,
                        mu_payoffs: se.mu_payoffs,
                        sp_payoff: se.sp_payoff,
                        converged,
                    }
                }
                SweepMode::Policy => {
                    let (outcome, log) = train_logged(&scenario, cfg)?;
                    let s = late_training_summary(&outcome.trace, &log, cfg.train.batch_steps, cfg.eval.tail_window);
                    SweepPoint {
                        target,
                        value,
                        prices: s.mean_prices,
                        allocations: s.mean_allocations,
                        mu_payoffs: s.mean_mu_payoffs,
                        sp_payoff: s.mean_sp_payoff,
                        converged: true,
                    }
                }
            };
            points.push(point);
        }
    }
    Ok(points)
}

fn target_label(t: Option<usize>) -> String {
    t.map_or_else(|| "all".to_string(), |t| (t + 1).to_string())
}

pub fn cmd_sweep(cfg: &RunConfig, opts: OutputOptions) -> Result<CommandOutput> {
    let points = sweep_points(cfg)?;
    let axis = cfg.sweep.axis.name();
    let method = match cfg.sweep.mode {
        SweepMode::Static => "static",
        SweepMode::Policy => "policy",
    };
    let mut rows = Vec::new();
    let mut summary_rows = Vec::new();
    for pt in &points {
        for mu in 0..pt.prices.len() {
            let mut row = vec![axis.to_string(), target_label(pt.target), fmt_num(pt.value), (mu + 1).to_string()];
            push_nums(&mut row, &[pt.prices[mu], pt.allocations[mu], pt.mu_payoffs[mu]]);
            rows.push(row);
        }
        summary_rows.push(vec![
            axis.to_string(),
            target_label(pt.target),
            fmt_num(pt.value),
            method.to_string(),
            fmt_num(pt.sp_payoff),
            pt.converged.to_string(),
        ]);
    }
    let mut artifacts = vec![
        Artifact::new(
            "sweep.csv",
            csv_document(&strings(&["axis", "target_mu", "value", "mu", "p", "x", "mu_payoff"]), &rows),
        ),
        Artifact::new(
            "sweep_summary.csv",
            csv_document(
                &strings(&["axis", "target_mu", "value", "method", "sp_payoff", "converged"]),
                &summary_rows,
            ),
        ),
    ];
    if opts.svg {
        artifacts.extend(sweep_charts(cfg, &points));
    }
    let not_converged = points.iter().filter(|p| !p.converged).count();
    let mut notes = Vec::new();
    let exit_code = if not_converged > 0 {
        notes.push(format!("{not_converged} sweep points stopped at the iteration cap"));
        EXIT_NOT_CONVERGED
    } else {
        0
    };
    Ok(CommandOutput {
        artifacts,
        exit_code,
        notes,
        summary: format!("{} sweep points on axis {axis} ({method})", points.len()),
    })
}

fn sweep_charts(cfg: &RunConfig, points: &[SweepPoint]) -> Vec<Artifact> {
    let axis = cfg.sweep.axis.name();
    let mut targets: Vec<Option<usize>> = Vec::new();
    for p in points {
        if !targets.contains(&p.target) {
            targets.push(p.target);
        }
    }
    let n = points.first().map_or(0, |p| p.prices.len());
    // Per-user axes plot each target's own response; global axes plot every user.
    let series = |pick: &dyn Fn(&SweepPoint, usize) -> f64, prefix: &str| -> Vec<Series> {
        if cfg.sweep.axis.is_per_user() && !cfg.sweep.joint {
            targets
                .iter()
                .map(|&t| {
                    let i = t.expect("per-user axis has targets");
                    Series::new(
                        format!("{prefix}{}", i + 1),
                        points.iter().filter(|p| p.target == t).map(|p| (p.value, pick(p, i))).collect(),
                    )
                })
                .collect()
        } else {
            (0..n)
                .map(|i| Series::new(format!("{prefix}{}", i + 1), points.iter().map(|p| (p.value, pick(p, i))).collect()))
                .collect()
        }
    };
    let cats: Vec<String> = cfg.sweep.values.iter().map(|v| format!("{v}")).collect();
    let groups: Vec<(String, Vec<f64>)> = targets
        .iter()
        .map(|&t| {
            (
                format!("target {}", target_label(t)),
                points.iter().filter(|p| p.target == t).map(|p| p.sp_payoff).collect(),
            )
        })
        .collect();
    vec![
        Artifact::new(
            "sweep_prices.svg",
            line_chart(&format!("Prices vs {axis}"), axis, "price", &series(&|p, i| p.prices[i], "p")),
        ),
        Artifact::new(
            "sweep_allocations.svg",
            line_chart(&format!("Contributions vs {axis}"), axis, "units", &series(&|p, i| p.allocations[i], "x")),
        ),
        Artifact::new(
            "sweep_sp_payoff.svg",
            bar_chart(&format!("Platform payoff vs {axis}"), "payoff", &cats, &groups),
        ),
    ]
}

pub fn cmd_gradcheck(opts: &GradcheckOptions) -> Result<CommandOutput> {
    let results = run_gradcheck(opts)?;
    let rows: Vec<Vec<String>> = results.iter().map(CheckResult::csv_row).collect();
    let mut table = format!("{:<26} {:>6} {:>12} {:>10}  status\n", "check", "probes", "max_rel_err", "tolerance");
    for r in &results {
        table.push_str(&format!(
            "{:<26} {:>6} {:>12.3e} {:>10.1e}  {}\n",
            r.name,
            r.probes,
            r.max_rel_err,
            r.tolerance,
            if r.passed { "pass" } else { "FAIL" }
        ));
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name.as_str()).collect();
    let (exit_code, notes) = if failed.is_empty() {
        (0, Vec::new())
    } else {
        (EXIT_NUMERIC, vec![format!("failing checks: {}", failed.join(", "))])
    };
    Ok(CommandOutput {
        artifacts: vec![Artifact::new("gradcheck.csv", csv_document(&CheckResult::csv_header(), &rows))],
        exit_code,
        notes,
        summary: table.trim_end().to_string(),
    })
}
