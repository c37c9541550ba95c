use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;

use babnd_core::audit::{audit_graph, audit_random, AuditOptions};
use babnd_core::model_io::build_objective;

use super::ensure_dir;
use super::plan::load_inputs;
use crate::manifest::digest_of;
use crate::output::write_json;
use crate::{resolve_out_dir, RunInfo, EXIT_FAILURE, EXIT_OK};

/// Without `--model` and `--scenario`, audits randomly generated networks.
#[derive(Args, Debug)]
pub struct AuditArgs {
    #[arg(long, requires = "scenario")]
    pub model: Option<PathBuf>,
    #[arg(long, requires = "model")]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Samples per box for the empirical minimum.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Grid points per axis for two-dimensional objectives.
    #[arg(long, default_value_t = 200)]
    pub grid: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also run the corrupted-bounds negative control.
    #[arg(long)]
    pub corrupt: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn run(a: &AuditArgs) -> Result<RunInfo> {
    if a.trials == 0 || a.samples == 0 {
        bail!("trials and samples must be positive");
    }
    let opts =
        AuditOptions { trials: a.trials, samples: a.samples, grid: a.grid, seed: a.seed, corrupt: a.corrupt };
    let mut model_digest = None;
    let report = match (&a.model, &a.scenario) {
        (Some(m), Some(s)) => {
            let (scenario, model) = load_inputs(s, m)?;
            model_digest = Some(model.digest().to_string());
            let obj = build_objective(&model, &scenario)?;
            audit_graph(&obj.graph, &obj.domain, &opts)?
        }
        _ => audit_random(&opts)?,
    };
    for c in &report.checks {
        println!(
            "{:<30} trials={:<6} checks={:<9} violations={:<6} worst_excess={:.3e}{}",
            c.name,
            c.trials,
            c.checks,
            c.violations,
            c.worst_excess,
            if c.control { " (control)" } else { "" }
        );
    }
    let dir = resolve_out_dir(&a.out_dir, "audit-bounds");
    ensure_dir(&dir)?;
    let path = dir.join("audit.json");
    write_json(&path, &report)?;
    let ok = report.violations() == 0 && report.controls_detected();
    if !ok {
        eprintln!("audit failed: {} violations", report.violations());
    }
    Ok(RunInfo {
        exit_code: if ok { EXIT_OK } else { EXIT_FAILURE },
        out_dir: Some(dir),
        outputs: vec![path],
        config_digest: digest_of(&(a.trials, a.samples, a.grid, a.corrupt))?,
        model_digest,
        seed: a.seed,
    })
}
