use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;

use babnd_core::model_io::{build_synthetic, SyntheticObjective};

use super::{ensure_dir, optimize, resolve_planner, synthetic_defaults, MethodRun, Problem};
use crate::manifest::digest_of;
use crate::output::{write_json, write_results, write_trace, ResultRow};
use crate::{resolve_out_dir, Method, PlannerFlags, RunInfo, EXIT_FAILURE, EXIT_OK};

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Input dimension `d`.
    #[arg(long)]
    pub dim: usize,
    #[arg(long, value_enum, default_value = "babnd")]
    pub method: Method,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub planner: PlannerFlags,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Runs one method on the synthetic objective of dimension `dim`.
pub fn solve(
    dim: usize,
    method: Method,
    seed: u64,
    flags: &PlannerFlags,
) -> Result<(MethodRun, ResultRow, babnd_core::bab::PlannerConfig)> {
    if matches!(method, Method::Rrt | Method::Prm) {
        bail!("{} needs a scenario; use `plan`", method.name());
    }
    let f = build_synthetic(dim)?;
    let cfg = resolve_planner(flags, synthetic_defaults(), seed)?;
    let run = optimize(&Problem::Synthetic(&f), method, &cfg, None)?;
    let optimum = dim as f64 * SyntheticObjective::term_global_min();
    let row = ResultRow {
        method: method.name().into(),
        problem: "synthetic".into(),
        dim,
        seed,
        best: run.best_value,
        gap: run.best_value - optimum,
        samples: run.samples,
        wall_ms: run.wall_ms,
    };
    Ok((run, row, cfg))
}

pub fn run(a: &SynthArgs) -> Result<RunInfo> {
    let (run, row, cfg) = solve(a.dim, a.method, a.seed, &a.planner)?;
    let dir = resolve_out_dir(&a.out_dir, "synth");
    ensure_dir(&dir)?;
    let results = dir.join("results.csv");
    let trace = dir.join("trace.csv");
    let solution = dir.join("solution.json");
    write_results(&results, std::slice::from_ref(&row))?;
    write_trace(&trace, &run.trace)?;
    write_json(&solution, &run)?;
    println!(
        "method={} d={} best={} gap={} samples={} wall_ms={:.1}",
        row.method, row.dim, row.best, row.gap, row.samples, row.wall_ms
    );
    Ok(RunInfo {
        exit_code: if run.failure.is_some() { EXIT_FAILURE } else { EXIT_OK },
        out_dir: Some(dir),
        outputs: vec![results, trace, solution],
        config_digest: digest_of(&(a.dim, a.method.name(), &cfg))?,
        model_digest: None,
        seed: a.seed,
    })
}
