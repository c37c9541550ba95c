use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;

use super::plan::{load_inputs, solve_plan, BaselineFlags, PlanArgs};
use super::{ensure_dir, synth};
use crate::manifest::digest_of;
use crate::output::{write_results, write_table, ResultRow};
use crate::{resolve_out_dir, Method, PlannerFlags, RunInfo, EXIT_OK};

/// Runs every method on every seed, on the synthetic benchmark (`--dims`) or
/// on a scenario (`--scenario` and `--model`).
#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Method::Babnd, Method::Cem, Method::Mppi])]
    pub methods: Vec<Method>,
    #[arg(long, value_delimiter = ',', conflicts_with = "scenario")]
    pub dims: Vec<usize>,
    #[arg(long, requires = "model")]
    pub scenario: Option<PathBuf>,
    #[arg(long, requires = "scenario")]
    pub model: Option<PathBuf>,
    /// Number of seeds.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub first_seed: u64,
    #[command(flatten)]
    pub planner: PlannerFlags,
    #[command(flatten)]
    pub baseline: BaselineFlags,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn collect(a: &CompareArgs) -> Result<Vec<ResultRow>> {
    if a.seeds == 0 || a.methods.is_empty() {
        bail!("need at least one seed and one method");
    }
    let seeds = a.first_seed..a.first_seed + a.seeds;
    let mut rows = Vec::new();
    match (&a.scenario, &a.model) {
        (Some(s), Some(m)) => {
            let (scenario, model) = load_inputs(s, m)?;
            let problem = s.file_stem().map_or("scenario".into(), |f| f.to_string_lossy().into_owned());
            for &method in &a.methods {
                for seed in seeds.clone() {
                    let args = PlanArgs {
                        scenario: s.clone(),
                        model: m.clone(),
                        method,
                        seed,
                        no_warm_start: false,
                        planner: a.planner.clone(),
                        baseline: a.baseline.clone(),
                        out_dir: None,
                    };
                    let (sol, _) = solve_plan(&args, &scenario, &model)?;
                    rows.push(ResultRow {
                        method: method.name().into(),
                        problem: problem.clone(),
                        dim: sol.actions.len(),
                        seed,
                        best: sol.objective.unwrap_or(f64::NAN),
                        gap: f64::NAN,
                        samples: sol.samples,
                        wall_ms: sol.wall_ms,
                    });
                }
            }
        }
        _ => {
            if a.dims.is_empty() {
                bail!("give --dims for the synthetic benchmark or --scenario and --model");
            }
            for &d in &a.dims {
                for &method in &a.methods {
                    for seed in seeds.clone() {
                        rows.push(synth::solve(d, method, seed, &a.planner)?.1);
                    }
                }
            }
        }
    }
    Ok(rows)
}

pub fn run(a: &CompareArgs) -> Result<RunInfo> {
    let rows = collect(a)?;
    let dir = resolve_out_dir(&a.out_dir, "compare");
    ensure_dir(&dir)?;
    let results = dir.join("results.csv");
    write_results(&results, &rows)?;

    let mut groups: Vec<(String, usize, String)> = Vec::new();
    for r in &rows {
        let key = (r.problem.clone(), r.dim, r.method.clone());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let header: Vec<String> =
        ["problem", "dim", "method", "runs", "median_best", "median_gap"].map(String::from).to_vec();
    let table: Vec<Vec<String>> = groups
        .iter()
        .map(|(p, d, m)| {
            let g: Vec<&ResultRow> =
                rows.iter().filter(|r| &r.problem == p && r.dim == *d && &r.method == m).collect();
            let best = median(g.iter().map(|r| r.best).collect());
            let gap = median(g.iter().map(|r| r.gap).collect());
            println!("{p:<12} d={d:<4} {m:<6} median best={best:.6} gap={gap:.6}");
            vec![p.clone(), d.to_string(), m.clone(), g.len().to_string(), best.to_string(), gap.to_string()]
        })
        .collect();
    let summary = dir.join("summary.csv");
    write_table(&summary, &header, &table)?;
    let names: Vec<&str> = a.methods.iter().map(|m| m.name()).collect();
    Ok(RunInfo {
        exit_code: EXIT_OK,
        out_dir: Some(dir),
        outputs: vec![results, summary],
        config_digest: digest_of(&(names, &a.dims, a.seeds, a.first_seed))?,
        model_digest: None,
        seed: a.first_seed,
    })
}
