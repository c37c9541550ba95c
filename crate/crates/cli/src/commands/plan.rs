use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use babnd_core::baselines::{prm_build, prm_plan, rrt_plan, BaselinePath, PrmConfig, RrtConfig};
use babnd_core::model_io::{build_objective, load_model, MlpModel, Scenario, StepModel};
use babnd_core::search::derive_seed;
use babnd_core::BoxDomain;

use super::{ensure_dir, optimize, resolve_planner, scenario_defaults, MethodRun, Problem};
use crate::manifest::digest_of;
use crate::output::{write_json, write_table, write_trace};
use crate::{resolve_out_dir, Method, PlannerFlags, RunInfo, EXIT_FAILURE, EXIT_OK};

/// Settings of the tree and roadmap planners.
#[derive(Args, Clone, Debug)]
pub struct BaselineFlags {
    /// Tree expansions.
    #[arg(long, default_value_t = 4000)]
    pub rrt_iterations: usize,
    /// Actions tried per tree expansion.
    #[arg(long, default_value_t = 1000)]
    pub candidates: usize,
    /// Roadmap nodes.
    #[arg(long, default_value_t = 2000)]
    pub prm_nodes: usize,
    /// Goal radius and roadmap connection threshold; defaults to the
    /// scenario's goal threshold, else 0.15.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Padding around the start and goal when sampling states and effectors.
    #[arg(long, default_value_t = 0.5)]
    pub space_margin: f64,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "babnd")]
    pub method: Method,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Start from no initial guess instead of the zero action sequence.
    #[arg(long)]
    pub no_warm_start: bool,
    #[command(flatten)]
    pub planner: PlannerFlags,
    #[command(flatten)]
    pub baseline: BaselineFlags,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MpcArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "babnd")]
    pub method: Method,
    /// Steps executed between replans.
    #[arg(long, default_value_t = 1)]
    pub period: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_warm_start: bool,
    #[command(flatten)]
    pub planner: PlannerFlags,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Solution {
    pub method: String,
    /// Planning objective of `actions`; absent for paths whose length
    /// differs from the horizon.
    pub objective: Option<f64>,
    pub actions: Vec<f64>,
    /// Predicted states `x_1..x_n`.
    pub states: Vec<Vec<f64>>,
    pub effectors: Vec<Vec<f64>>,
    pub step_costs: Vec<f64>,
    pub final_step_cost: f64,
    pub success: bool,
    pub samples: usize,
    pub termination: String,
    pub certified: Option<bool>,
    pub wall_ms: f64,
}

pub fn load_inputs(scenario: &Path, model: &Path) -> Result<(Scenario, MlpModel)> {
    let s = Scenario::load(scenario).with_context(|| format!("loading {}", scenario.display()))?;
    let m = load_model(model).with_context(|| format!("loading {}", model.display()))?;
    StepModel::new(&m, &s)?;
    Ok((s, m))
}

/// Zero actions clamped into the action box.
fn zero_guess(domain: &BoxDomain) -> Vec<f64> {
    let mut z = vec![0.0; domain.dim()];
    domain.clamp(&mut z);
    z
}

fn rollout_costs(
    model: &MlpModel,
    scenario: &Scenario,
    actions: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
    let step = StepModel::new(model, scenario)?;
    let (xs, ps) = step.rollout(&scenario.initial_state, &scenario.initial_effector, actions)?;
    let costs = xs.iter().zip(&ps).enumerate().map(|(t, (x, p))| scenario.step_cost(t + 1, x, p)).collect();
    Ok((xs, ps, costs))
}

fn cube_around(points: &[&[f64]], margin: f64) -> Result<BoxDomain> {
    let d = points[0].len();
    let lo = (0..d).map(|j| points.iter().map(|p| p[j]).fold(f64::INFINITY, f64::min) - margin).collect();
    let hi = (0..d).map(|j| points.iter().map(|p| p[j]).fold(f64::NEG_INFINITY, f64::max) + margin).collect();
    Ok(BoxDomain::new(lo, hi)?)
}

/// Sampling regions for the tree and roadmap planners: the bounding box of
/// start and goal (and, for effectors, of every keypoint) padded by `margin`.
pub fn planning_spaces(s: &Scenario, margin: f64) -> Result<(BoxDomain, BoxDomain)> {
    let states = cube_around(&[&s.initial_state, &s.target_state], margin)?;
    let k = s.action_dim();
    let mut pts: Vec<&[f64]> = vec![&s.initial_effector];
    pts.extend(s.initial_state.chunks_exact(k));
    pts.extend(s.target_state.chunks_exact(k));
    Ok((states, cube_around(&pts, margin)?))
}

pub fn run_baseline(
    model: &MlpModel,
    scenario: &Scenario,
    method: Method,
    flags: &BaselineFlags,
    seed: u64,
) -> Result<BaselinePath> {
    let threshold = flags.threshold.or(scenario.goal_threshold).unwrap_or(0.15);
    let (states, effectors) = planning_spaces(scenario, flags.space_margin)?;
    Ok(match method {
        Method::Rrt => {
            let mut cfg = RrtConfig::new(states, threshold, seed);
            cfg.max_iterations = flags.rrt_iterations;
            cfg.candidates = flags.candidates;
            rrt_plan(model, scenario, &cfg)?
        }
        Method::Prm => {
            let cfg = PrmConfig {
                nodes: flags.prm_nodes,
                threshold,
                state_space: states,
                effector_space: effectors,
                seed,
            };
            prm_plan(&prm_build(model, scenario, &cfg)?, model, scenario)?
        }
        _ => bail!("{} is not a graph-search planner", method.name()),
    })
}

fn write_path(path: &Path, scenario: &Scenario, sol: &Solution) -> Result<()> {
    let (s, k) = (scenario.state_dim(), scenario.action_dim());
    let mut header = vec!["step".to_string()];
    header.extend((0..s).map(|j| format!("x{j}")));
    header.extend((0..k).map(|j| format!("p{j}")));
    header.extend((0..k).map(|j| format!("u{j}")));
    header.push("cost".into());
    let rows: Vec<Vec<String>> = sol
        .states
        .iter()
        .enumerate()
        .map(|(t, x)| {
            let mut r = vec![(t + 1).to_string()];
            r.extend(x.iter().map(f64::to_string));
            r.extend(sol.effectors[t].iter().map(f64::to_string));
            r.extend(sol.actions[t * k..(t + 1) * k].iter().map(f64::to_string));
            r.push(sol.step_costs[t].to_string());
            r
        })
        .collect();
    write_table(path, &header, &rows)
}

pub fn solve_plan(a: &PlanArgs, scenario: &Scenario, model: &MlpModel) -> Result<(Solution, Option<MethodRun>)> {
    if matches!(a.method, Method::Rrt | Method::Prm) {
        let start = std::time::Instant::now();
        let path = run_baseline(model, scenario, a.method, &a.baseline, a.seed)?;
        let actions = path.flat_actions();
        let (xs, ps, costs) = rollout_costs(model, scenario, &actions)?;
        let objective = (path.actions.len() == scenario.horizon).then(|| costs.iter().sum());
        let sol = Solution {
            method: a.method.name().into(),
            objective,
            actions,
            states: xs,
            effectors: ps,
            step_costs: costs,
            final_step_cost: path.final_step_cost,
            success: path.success,
            samples: path.nodes,
            termination: if path.success { "success" } else { "failure" }.into(),
            certified: None,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        return Ok((sol, None));
    }
    let cfg = resolve_planner(&a.planner, scenario_defaults(), a.seed)?;
    let obj = build_objective(model, scenario)?;
    let warm = (!a.no_warm_start).then(|| zero_guess(&obj.domain));
    let run = optimize(&Problem::Graph(&obj.graph, &obj.domain), a.method, &cfg, warm.as_deref())?;
    let (xs, ps, costs) = rollout_costs(model, scenario, &run.best_input)?;
    let sol = Solution {
        method: run.method.clone(),
        objective: Some(run.best_value),
        actions: run.best_input.clone(),
        final_step_cost: *costs.last().unwrap_or(&0.0),
        states: xs,
        effectors: ps,
        step_costs: costs,
        success: run.failure.is_none(),
        samples: run.samples,
        termination: run.termination.clone(),
        certified: run.certified,
        wall_ms: run.wall_ms,
    };
    Ok((sol, Some(run)))
}

pub fn run_plan(a: &PlanArgs) -> Result<RunInfo> {
    let (scenario, model) = load_inputs(&a.scenario, &a.model)?;
    let (sol, run) = solve_plan(a, &scenario, &model)?;
    let dir = resolve_out_dir(&a.out_dir, "plan");
    ensure_dir(&dir)?;
    let solution = dir.join("solution.json");
    let path = dir.join("path.csv");
    write_json(&solution, &sol)?;
    write_path(&path, &scenario, &sol)?;
    let mut outputs = vec![solution, path];
    if let Some(run) = &run {
        let trace = dir.join("trace.csv");
        write_trace(&trace, &run.trace)?;
        outputs.push(trace);
    }
    match sol.objective {
        Some(v) => println!("method={} objective={v} final_step_cost={}", sol.method, sol.final_step_cost),
        None => println!("method={} steps={} final_step_cost={}", sol.method, sol.states.len(), sol.final_step_cost),
    }
    if !sol.success {
        eprintln!("planner failed: {}", sol.termination);
    }
    let cfg = resolve_planner(&a.planner, scenario_defaults(), a.seed)?;
    Ok(RunInfo {
        exit_code: if sol.success { EXIT_OK } else { EXIT_FAILURE },
        out_dir: Some(dir),
        outputs,
        config_digest: digest_of(&(&scenario, a.method.name(), &cfg, a.no_warm_start))?,
        model_digest: Some(model.digest().to_string()),
        seed: a.seed,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MpcSummary {
    pub method: String,
    pub period: usize,
    pub rounds: usize,
    /// Objective of the first plan, as predicted.
    pub open_loop_objective: f64,
    /// Sum of the step costs actually incurred.
    pub closed_loop_cost: f64,
    pub final_step_cost: f64,
    pub samples: usize,
    pub wall_ms: f64,
}

pub struct MpcRun {
    pub summary: MpcSummary,
    /// Per executed step: round, state, effector, action, cost.
    pub steps: Vec<(usize, Vec<f64>, Vec<f64>, Vec<f64>, f64)>,
}

/// Replans every `period` steps from the state reached by executing the
/// previous plan on the model. Each replan is warm-started with the unexecuted
/// tail of the previous plan.
pub fn solve_mpc(a: &MpcArgs, scenario: &Scenario, model: &MlpModel) -> Result<MpcRun> {
    if matches!(a.method, Method::Rrt | Method::Prm) {
        bail!("closed-loop runs support babnd, cem, mppi and gd");
    }
    if a.period == 0 {
        bail!("the replan period must be at least 1");
    }
    let base = resolve_planner(&a.planner, scenario_defaults(), a.seed)?;
    let step = StepModel::new(model, scenario)?;
    let k = scenario.action_dim();
    let h = scenario.horizon;
    let start = std::time::Instant::now();
    let (mut x, mut p) = (scenario.initial_state.clone(), scenario.initial_effector.clone());
    let mut tail: Option<Vec<f64>> = None;
    let mut steps = Vec::new();
    let mut open_loop = None;
    let mut samples = 0;
    let mut executed = 0;
    let mut round = 0;
    while executed < h {
        let sub = scenario.advanced(&x, &p, executed);
        let obj = build_objective(model, &sub)?;
        let warm = match tail.take() {
            Some(t) => Some(t),
            None => (!a.no_warm_start).then(|| zero_guess(&obj.domain)),
        };
        let cfg = babnd_core::bab::PlannerConfig { seed: derive_seed(a.seed, round as u64), ..base.clone() };
        let run = optimize(&Problem::Graph(&obj.graph, &obj.domain), a.method, &cfg, warm.as_deref())?;
        if let Some(f) = &run.failure {
            bail!("planner failed in round {round}: {f}");
        }
        samples += run.samples;
        open_loop.get_or_insert(run.best_value);
        let n = a.period.min(h - executed);
        for u in run.best_input.chunks_exact(k).take(n) {
            x = step.step(&x, &p, u)?;
            p = p.iter().zip(u).map(|(a, b)| a + b).collect();
            executed += 1;
            let c = scenario.step_cost(executed, &x, &p);
            steps.push((round, x.clone(), p.clone(), u.to_vec(), c));
        }
        tail = Some(run.best_input[n * k..].to_vec());
        round += 1;
    }
    let summary = MpcSummary {
        method: a.method.name().into(),
        period: a.period,
        rounds: round,
        open_loop_objective: open_loop.unwrap_or(0.0),
        closed_loop_cost: steps.iter().map(|s| s.4).sum(),
        final_step_cost: steps.last().map_or(0.0, |s| s.4),
        samples,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok(MpcRun { summary, steps })
}

pub fn run_mpc(a: &MpcArgs) -> Result<RunInfo> {
    let (scenario, model) = load_inputs(&a.scenario, &a.model)?;
    let run = solve_mpc(a, &scenario, &model)?;
    let dir = resolve_out_dir(&a.out_dir, "mpc");
    ensure_dir(&dir)?;
    let (s, k) = (scenario.state_dim(), scenario.action_dim());
    let mut header = vec!["step".to_string(), "round".to_string()];
    header.extend((0..s).map(|j| format!("x{j}")));
    header.extend((0..k).map(|j| format!("p{j}")));
    header.extend((0..k).map(|j| format!("u{j}")));
    header.push("cost".into());
    let rows: Vec<Vec<String>> = run
        .steps
        .iter()
        .enumerate()
        .map(|(t, (r, x, p, u, c))| {
            let mut row = vec![(t + 1).to_string(), r.to_string()];
            row.extend(x.iter().chain(p).chain(u).map(f64::to_string));
            row.push(c.to_string());
            row
        })
        .collect();
    let steps = dir.join("mpc.csv");
    let summary = dir.join("summary.json");
    write_table(&steps, &header, &rows)?;
    write_json(&summary, &run.summary)?;
    println!(
        "method={} period={} closed_loop_cost={} final_step_cost={} open_loop_objective={}",
        run.summary.method,
        run.summary.period,
        run.summary.closed_loop_cost,
        run.summary.final_step_cost,
        run.summary.open_loop_objective
    );
    let cfg = resolve_planner(&a.planner, scenario_defaults(), a.seed)?;
    Ok(RunInfo {
        exit_code: EXIT_OK,
        out_dir: Some(dir),
        outputs: vec![steps, summary],
        config_digest: digest_of(&(&scenario, a.method.name(), a.period, &cfg, a.no_warm_start))?,
        model_digest: Some(model.digest().to_string()),
        seed: a.seed,
    })
}
