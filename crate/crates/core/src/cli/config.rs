//! Run configuration: one TOML file, optionally patched by `--set key=value`.

use serde::{Deserialize, Serialize};

use crate::cli::generate::{generate_scenario, GenerationSpec};
use crate::dynamics::EnvConfig;
use crate::error::{Error, Result};
use crate::leader::SolverConfig;
use crate::learner::TrainConfig;
use crate::model::{DemandDistribution, MuProfile, Scenario};

/// Where the game instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ScenarioSource {
    /// Drawn at random from a generation spec.
    Generate(GenerationSpec),
    /// Listed user by user.
    Explicit { lambda: f64, mus: Vec<MuProfile> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Own-demand revenue of one user at a time.
    Delta,
    /// Unit cost of one user at a time.
    Cost,
    /// Upper demand bound of one user at a time.
    DemandUpper,
    Lambda,
}

impl SweepAxis {
    /// Axes that describe a single user.
    pub fn is_per_user(self) -> bool {
        !matches!(self, SweepAxis::Lambda)
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Delta => "delta",
            SweepAxis::Cost => "cost",
            SweepAxis::DemandUpper => "demand_upper",
            SweepAxis::Lambda => "lambda",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Solve the static equilibrium at every point.
    Static,
    /// Train a pricing agent at every point and report its late-training means.
    Policy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Users to vary on per-user axes; empty means every user in turn.
    pub targets: Vec<usize>,
    /// Apply a per-user axis to every user at once instead of one at a time.
    pub joint: bool,
    pub mode: SweepMode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            axis: SweepAxis::DemandUpper,
            values: vec![20.0, 25.0, 30.0],
            targets: Vec::new(),
            joint: false,
            mode: SweepMode::Static,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Rounds played by each baseline.
    pub baseline_steps: usize,
    /// Episodes averaged for late-training statistics.
    pub tail_window: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            baseline_steps: 1000,
            tail_window: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed: training, baselines, and (unless `scenario_seed` is set)
    /// scenario generation and solver starts.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scenario_seed: Option<u64>,
    pub scenario: ScenarioSource,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub env: EnvConfig,
    /// `train.seed` is always replaced by the master seed.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Parses TOML text, applies `key=value` overrides and an optional seed
    /// override, and validates every section.
    pub fn from_toml(text: &str, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: RunConfig = doc.try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.env.validate()?;
        self.train.validate()?;
        if let ScenarioSource::Generate(spec) = &self.scenario {
            spec.validate()?;
        }
        if self.eval.baseline_steps == 0 || self.eval.tail_window == 0 {
            return Err(Error::config("eval.baseline_steps and eval.tail_window must be >= 1"));
        }
        if self.sweep.values.is_empty() || self.sweep.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("sweep.values must be a non-empty list of finite numbers"));
        }
        Ok(())
    }

    pub fn effective_scenario_seed(&self) -> u64 {
        self.scenario_seed.unwrap_or(self.seed)
    }

    pub fn build_scenario(&self) -> Result<Scenario> {
        let seed = self.effective_scenario_seed();
        match &self.scenario {
            ScenarioSource::Generate(spec) => generate_scenario(spec, seed),
            ScenarioSource::Explicit { lambda, mus } => Scenario::new(*lambda, mus.clone(), seed),
        }
    }

    /// The resolved configuration as JSON, for manifests and checkpoints.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialises")
    }
}

/// Applies `a.b.c=value`; the value is parsed as a TOML value and falls back
/// to a plain string.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {assignment:?} is not key=value")))?;
    let value = parse_value(raw.trim());
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("override key {key:?} is malformed")));
    }
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::config(format!("override {key}: {p} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// `base` with one swept parameter set to `value`.
pub fn apply_axis(base: &Scenario, axis: SweepAxis, target: Option<usize>, value: f64) -> Result<Scenario> {
    if axis == SweepAxis::Lambda {
        return base.with_lambda(value);
    }
    let mut mus = Vec::with_capacity(base.len());
    for (n, mu) in base.mus().iter().enumerate() {
        let hit = target.is_none_or(|t| t == n);
        let (mut delta, mut cost, mut demand) = (mu.delta(), mu.cost(), *mu.demand());
        if hit {
            match axis {
                SweepAxis::Delta => delta = value,
                SweepAxis::Cost => cost = value,
                SweepAxis::DemandUpper => demand = DemandDistribution::new(demand.kind(), demand.lo(), value)?,
                SweepAxis::Lambda => unreachable!(),
            }
        }
        mus.push(MuProfile::new(mu.tau(), delta, cost, demand).map_err(|e| {
            Error::config(format!("{} = {value} for user {n}: {e}", axis.name()))
        })?);
    }
    base.with_mus(mus)
}
