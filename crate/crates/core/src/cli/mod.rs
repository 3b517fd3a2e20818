//! Command-line experiment runner.
//!
//! ```text
//! crowdprice static    --config run.toml [--seed N] [--out DIR] [--svg on|off]
//! crowdprice train     --config run.toml [--seed N] [--out DIR] [--svg on|off] [--steps-trace on|off]
//! crowdprice sweep     --config run.toml [--seed N] [--out DIR] [--svg on|off]
//! crowdprice gradcheck [--config run.toml] [--seed N] [--out DIR] [--probes K]
//! ```
//!
//! `--set key=value` (repeatable) overrides a single config key, e.g.
//! `--set train.episodes=50`. Every run writes its files and a
//! `manifest.json` with their SHA-256 hashes into the output directory.

mod commands;
mod config;
mod generate;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::gradcheck::GradcheckOptions;

pub use commands::{
    cmd_gradcheck, cmd_static, cmd_sweep, cmd_train, late_training_summary, sweep_points, train_logged, CommandOutput,
    OutputOptions, SweepPoint,
};
pub use config::{apply_axis, apply_override, EvalConfig, RunConfig, ScenarioSource, SweepAxis, SweepConfig, SweepMode};
pub use generate::{generate_scenario, Draw, GenerationSpec};
pub use manifest::{write_artifacts, Artifact, ArtifactEntry, RunManifest, MANIFEST_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Exit status for an error that aborted a command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Io(_) => EXIT_CONFIG,
        Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
        Error::Domain(_) | Error::Shape { .. } | Error::State(_) | Error::Diverged { .. } => EXIT_NUMERIC,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

impl Toggle {
    fn is_on(self) -> bool {
        self == Toggle::On
    }
}

#[derive(Debug, Parser)]
#[command(name = "crowdprice", version, about = "Crowdsensing pricing: static equilibrium and PPO pricing agent")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the static Stackelberg equilibrium.
    Static(RunArgs),
    /// Train a PPO pricing agent and compare it with the baselines.
    Train(RunArgs),
    /// Comparative statics over one parameter axis.
    Sweep(RunArgs),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Toggle::Off)]
    pub svg: Toggle,
    #[arg(long = "steps-trace", value_enum, default_value_t = Toggle::Off)]
    pub steps_trace: Toggle,
    /// Override a config key, `section.key=value`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Only the seed is read from the config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write `gradcheck.csv` and a manifest here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub probes: usize,
    /// Perturb the named check's analytic gradient (self-test).
    #[arg(long, hide = true)]
    pub corrupt: Option<String>,
}

fn load_config(path: &PathBuf, overrides: &[String], seed: Option<u64>) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::from_toml(&text, overrides, seed)
        .map_err(|e| Error::config(format!("{}: {}", path.display(), e.to_string().trim_end())))
}

/// Runs a parsed command and returns the process exit status. Output files
/// are written only after the command has finished computing.
pub fn execute(cli: Cli) -> i32 {
    match try_execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn try_execute(cli: Cli) -> Result<i32> {
    let (name, args) = match cli.command {
        Command::Gradcheck(args) => return run_gradcheck_command(args),
        Command::Static(a) => ("static", a),
        Command::Train(a) => ("train", a),
        Command::Sweep(a) => ("sweep", a),
    };
    let cfg = load_config(&args.config, &args.set, args.seed)?;
    let opts = OutputOptions {
        svg: args.svg.is_on(),
        steps_trace: args.steps_trace.is_on(),
    };
    let output = match name {
        "static" => cmd_static(&cfg, opts)?,
        "train" => cmd_train(&cfg, opts)?,
        _ => cmd_sweep(&cfg, opts)?,
    };
    finish(name, Some(&args.out), output, cfg.seed, cfg.echo())
}

fn run_gradcheck_command(args: GradcheckArgs) -> Result<i32> {
    let seed = match (&args.config, args.seed) {
        (_, Some(s)) => s,
        (Some(path), None) => load_config(path, &[], None)?.seed,
        (None, None) => 0,
    };
    if args.probes == 0 {
        return Err(Error::config("--probes must be >= 1"));
    }
    let opts = GradcheckOptions {
        seed,
        probes: args.probes,
        corrupt: args.corrupt,
    };
    let output = cmd_gradcheck(&opts)?;
    let echo = serde_json::to_value(&opts).expect("options serialise");
    finish("gradcheck", args.out.as_ref(), output, seed, echo)
}

fn finish(
    command: &str,
    out_dir: Option<&PathBuf>,
    output: CommandOutput,
    seed: u64,
    echo: serde_json::Value,
) -> Result<i32> {
    println!("{}", output.summary);
    for note in &output.notes {
        eprintln!("note: {note}");
    }
    if let Some(dir) = out_dir {
        let mut manifest = RunManifest::new(command, seed, echo);
        manifest.exit_code = output.exit_code;
        manifest.notes = output.notes.clone();
        write_artifacts(dir, &output.artifacts, manifest)?;
        println!("wrote {} files to {}", output.artifacts.len() + 1, dir.display());
    }
    Ok(output.exit_code)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}
