//! Command-line front end for the babnd planner.
//!
//! Every command writes its outputs and a [`manifest::RunManifest`] into an
//! output directory. Exit codes: 0 on success, 1 when a planner fails (or an
//! audit finds violations), 2 on usage, parse or input errors.

pub mod commands;
pub mod manifest;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};

use babnd_core::crown::BoundingMode;
use manifest::RunManifest;

pub const THREADS_ENV: &str = "BABND_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "babnd", version, about = "Branch-and-bound planning over ReLU dynamics models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a seeded random dynamics model (and optionally a matching scenario).
    GenModel(commands::gen_model::GenModelArgs),
    /// Optimize the synthetic benchmark and report the gap to its optimum.
    Synth(commands::synth::SynthArgs),
    /// Open-loop planning on a scenario.
    Plan(commands::plan::PlanArgs),
    /// Closed-loop replanning with the model as the environment.
    Mpc(commands::plan::MpcArgs),
    /// Randomized soundness checks of the bounds.
    AuditBounds(commands::audit::AuditArgs),
    /// Run several methods over several seeds and join the results.
    Compare(commands::compare::CompareArgs),
    /// Rerun a recorded command and compare its outputs.
    Replay(commands::replay::ReplayArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Babnd,
    Cem,
    Mppi,
    Gd,
    Rrt,
    Prm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Babnd => "babnd",
            Method::Cem => "cem",
            Method::Mppi => "mppi",
            Method::Gd => "gd",
            Method::Rrt => "rrt",
            Method::Prm => "prm",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum BoundingArg {
    FullCrown,
    EarlyStopInterval,
    EarlyStopEmpirical,
}

impl From<BoundingArg> for BoundingMode {
    fn from(b: BoundingArg) -> Self {
        match b {
            BoundingArg::FullCrown => BoundingMode::FullCrown,
            BoundingArg::EarlyStopInterval => BoundingMode::EarlyStopInterval,
            BoundingArg::EarlyStopEmpirical => BoundingMode::EarlyStopEmpirical,
        }
    }
}

/// Planner settings; flags override the fields of `--config`.
#[derive(Args, Clone, Debug, Default)]
pub struct PlannerFlags {
    /// Planner configuration JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_percent: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub max_wall_ms: Option<u64>,
    #[arg(long)]
    pub target: Option<f64>,
    /// Total objective evaluations, shared by every method.
    #[arg(long, visible_alias = "budget")]
    pub max_samples: Option<usize>,
    #[arg(long, value_enum)]
    pub bounding: Option<BoundingArg>,
    #[arg(long)]
    pub min_width: Option<f64>,
}

/// Where a command wrote its results.
#[derive(Debug, Default)]
pub struct RunInfo {
    pub exit_code: i32,
    pub out_dir: Option<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub config_digest: String,
    pub model_digest: Option<String>,
    pub seed: u64,
}

/// Output directory from `--out-dir` or a fresh timestamped one.
pub fn resolve_out_dir(given: &Option<PathBuf>, command: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| {
        PathBuf::from("babnd-runs").join(format!("{command}-{}", Utc::now().format("%Y%m%dT%H%M%S%.3f")))
    })
}

fn init_threads() {
    let Ok(v) = std::env::var(THREADS_ENV) else { return };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            // Fails only if the pool is already running, which is harmless.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("warning: ignoring {THREADS_ENV}={v:?}"),
    }
}

/// Prints the error chain, skipping causes already quoted by their parent.
pub fn report_error(e: &anyhow::Error) {
    let mut msg = String::new();
    for cause in e.chain() {
        let c = cause.to_string();
        if !msg.contains(&c) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&c);
        }
    }
    eprintln!("error: {msg}");
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::GenModel(_) => "gen-model",
        Command::Synth(_) => "synth",
        Command::Plan(_) => "plan",
        Command::Mpc(_) => "mpc",
        Command::AuditBounds(_) => "audit-bounds",
        Command::Compare(_) => "compare",
        Command::Replay(_) => "replay",
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_threads();
    let name = command_name(&cli.command);
    let started = Utc::now();
    let result = match &cli.command {
        Command::GenModel(a) => commands::gen_model::run(a),
        Command::Synth(a) => commands::synth::run(a),
        Command::Plan(a) => commands::plan::run_plan(a),
        Command::Mpc(a) => commands::plan::run_mpc(a),
        Command::AuditBounds(a) => commands::audit::run(a),
        Command::Compare(a) => commands::compare::run(a),
        Command::Replay(a) => return commands::replay::run(a),
    };
    let info = match result {
        Ok(info) => info,
        Err(e) => {
            report_error(&e);
            return EXIT_USAGE;
        }
    };
    if let Some(dir) = &info.out_dir {
        let mut recorded: Vec<String> =
            args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
        if !recorded.iter().any(|a| a == "--out-dir" || a.starts_with("--out-dir=")) {
            recorded.push("--out-dir".into());
            recorded.push(dir.display().to_string());
        }
        let m = RunManifest {
            version: manifest::MANIFEST_VERSION,
            csv_schema: manifest::CSV_SCHEMA.into(),
            command: name.into(),
            args: recorded,
            config_digest: info.config_digest.clone(),
            model_digest: info.model_digest.clone(),
            seed: info.seed,
            started,
            finished: Utc::now(),
            exit_code: info.exit_code,
            outputs: info.outputs.clone(),
        };
        if let Err(e) = m.write(dir) {
            report_error(&e);
            return EXIT_USAGE;
        }
    }
    info.exit_code
}
