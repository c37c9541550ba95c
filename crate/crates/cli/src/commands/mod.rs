pub mod audit;
pub mod compare;
pub mod gen_model;
pub mod plan;
pub mod replay;
pub mod synth;

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use babnd_core::bab::{plan_graph, plan_synthetic, PlannerConfig, TraceRow};
use babnd_core::model_io::SyntheticObjective;
use babnd_core::search::{search, SearcherConfig, SearcherKind};
use babnd_core::{BoxDomain, CompGraph};

use crate::output::sampler_trace;
use crate::{Method, PlannerFlags};

/// Branch-and-bound settings used for the synthetic benchmark unless a
/// configuration file is given.
pub fn synthetic_defaults() -> PlannerConfig {
    PlannerConfig {
        batch_size: 2,
        searcher: SearcherConfig::new(
            SearcherKind::Cem { agents: 1, elites: 10, jitter: 0.001 },
            200,
            20,
            0,
        ),
        max_iterations: usize::MAX,
        max_samples: Some(4_000_000),
        ..PlannerConfig::default()
    }
}

/// Branch-and-bound settings used for scenarios unless a configuration file
/// is given.
pub fn scenario_defaults() -> PlannerConfig {
    PlannerConfig {
        batch_size: 4,
        searcher: SearcherConfig::new(
            SearcherKind::Cem { agents: 1, elites: 10, jitter: 0.001 },
            100,
            10,
            0,
        ),
        max_iterations: usize::MAX,
        max_samples: Some(200_000),
        ..PlannerConfig::default()
    }
}

/// `base`, replaced by `--config` when given, then overridden by flags.
pub fn resolve_planner(flags: &PlannerFlags, base: PlannerConfig, seed: u64) -> Result<PlannerConfig> {
    let mut c = match &flags.config {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => base,
    };
    c.seed = seed;
    if let Some(v) = flags.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = flags.eta {
        c.eta = v;
    }
    if let Some(v) = flags.temperature {
        c.temperature = v;
    }
    if let Some(v) = flags.top_percent {
        c.top_percent = v;
    }
    if let Some(v) = flags.max_iterations {
        c.max_iterations = v;
    }
    if let Some(v) = flags.max_wall_ms {
        c.max_wall_ms = Some(v);
    }
    if let Some(v) = flags.target {
        c.target = Some(v);
    }
    if let Some(v) = flags.max_samples {
        c.max_samples = Some(v);
    }
    if let Some(v) = flags.bounding {
        c.bounding = v.into();
    }
    if let Some(v) = flags.min_width {
        c.min_width = v;
    }
    if c.max_samples == Some(0) {
        bail!("the sample budget must be positive");
    }
    c.validate()?;
    Ok(c)
}

/// A standalone sampler spending at most `budget` evaluations.
pub fn sampler_config(method: Method, seed: u64, budget: Option<usize>) -> Result<SearcherConfig> {
    let kind = match method {
        Method::Cem => SearcherKind::cem(),
        Method::Mppi => SearcherKind::mppi(),
        Method::Gd => SearcherKind::gd(),
        _ => bail!("{} is not a sampling planner", method.name()),
    };
    let mut c = SearcherConfig::with_defaults(kind, seed);
    if let Some(b) = budget {
        c.samples_per_iter = b / c.iterations;
        if c.samples_per_iter == 0 {
            bail!("budget {b} is below the {} iterations of {}", c.iterations, method.name());
        }
    }
    Ok(c)
}

pub enum Problem<'a> {
    Synthetic(&'a SyntheticObjective),
    Graph(&'a CompGraph, &'a BoxDomain),
}

#[derive(Clone, Debug, Serialize)]
pub struct MethodRun {
    pub method: String,
    pub best_value: f64,
    pub best_input: Vec<f64>,
    pub samples: usize,
    pub termination: String,
    /// Whether every bound used was sound (branch and bound only).
    pub certified: Option<bool>,
    pub failure: Option<String>,
    pub wall_ms: f64,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

/// Runs an optimizing method (branch and bound or a sampler).
pub fn optimize(
    problem: &Problem<'_>,
    method: Method,
    planner: &PlannerConfig,
    warm: Option<&[f64]>,
) -> Result<MethodRun> {
    let start = Instant::now();
    if method == Method::Babnd {
        let r = match problem {
            Problem::Synthetic(f) => plan_synthetic(f, planner, warm)?,
            Problem::Graph(g, dom) => plan_graph(g, dom, planner, warm)?,
        };
        return Ok(MethodRun {
            method: method.name().into(),
            best_value: r.best_value,
            best_input: r.best_input,
            samples: r.evaluated,
            termination: serde_json::to_value(r.termination)?.as_str().unwrap_or("").into(),
            certified: Some(r.certified),
            failure: r.failure,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            trace: r.trace,
        });
    }
    let cfg = sampler_config(method, planner.seed, planner.max_samples)?;
    let report = match problem {
        Problem::Synthetic(f) => search(*f, &f.domain(), &cfg, warm, &[])?,
        Problem::Graph(g, dom) => search(*g, dom, &cfg, warm, &[])?,
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(MethodRun {
        method: method.name().into(),
        best_value: report.best_value,
        best_input: report.best_input,
        samples: report.evaluated,
        termination: "budget".into(),
        certified: None,
        failure: None,
        wall_ms,
        trace: sampler_trace(&report.history, cfg.samples_per_iter, wall_ms),
    })
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
