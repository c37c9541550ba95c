//! The branch-and-bound planning loop.
//!
//! The root box is searched and bounded first. Each iteration then picks
//! promising boxes out of the pool, bisects them, searches and bounds the
//! children, updates the incumbent and prunes every box whose lower bound
//! exceeds it.

mod bounder;
mod heuristics;

use std::f64::consts::LN_2;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bounder::{Bounder, GraphBounder, SeparableBounder};
pub use heuristics::{choose_split, goes_low, pick_out};

use crate::crown::{BoundingMode, CrownConfig, StopRule};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::graph::CompGraph;
use crate::model_io::SyntheticObjective;
use crate::objective::Objective;
use crate::search::{
    batch_search_with_seeds, derive_seed, search, Sample, SearchReport, SearcherConfig,
    SearcherKind,
};

/// Relative slack on the pruning test `lf > uf`, absorbing rounding in the
/// bound and objective computations.
pub const PRUNE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Boxes picked per iteration (`n`).
    pub batch_size: usize,
    /// Fraction of picks by best `uf` (`eta`).
    pub eta: f64,
    /// Softmax temperature of the `lf`-based picks (`T`).
    pub temperature: f64,
    /// Percentage of a box's best samples used to choose the split (`w`).
    pub top_percent: f64,
    /// Search run on every new box.
    pub searcher: SearcherConfig,
    pub bounding: BoundingMode,
    pub stop: StopRule,
    pub max_iterations: usize,
    pub max_wall_ms: Option<u64>,
    /// Stop once the incumbent is at or below this value.
    pub target: Option<f64>,
    /// Hard cap on objective evaluations.
    pub max_samples: Option<usize>,
    pub seed: u64,
    /// Dimensions at or below this width are not split further.
    pub min_width: f64,
    /// Keep the final leaves and the pruned boxes in the result.
    pub record_boxes: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            eta: 0.75,
            temperature: 0.05,
            top_percent: 1.0,
            searcher: SearcherConfig::new(SearcherKind::cem(), 100, 4, 0),
            bounding: BoundingMode::EarlyStopInterval,
            stop: StopRule::LastRelu,
            max_iterations: 100,
            max_wall_ms: None,
            target: None,
            max_samples: None,
            seed: 0,
            min_width: 1e-6,
            record_boxes: false,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad("eta must lie in [0, 1]");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be > 0");
        }
        if !(self.top_percent > 0.0 && self.top_percent <= 100.0) {
            return bad("top percentage must lie in (0, 100]");
        }
        if !(self.min_width >= 0.0 && self.min_width.is_finite()) {
            return bad("minimum width must be >= 0");
        }
        if self.max_samples == Some(0) {
            return bad("sample budget must be positive");
        }
        self.searcher.validate()
    }
}

#[derive(Clone, Debug)]
pub struct SubdomainRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub domain: BoxDomain,
    pub lf: f64,
    pub uf: f64,
    pub best_input: Vec<f64>,
    pub top: Vec<Sample>,
    /// Log of the volume relative to the root box.
    pub log_volume: f64,
    pub splittable: bool,
}

impl SubdomainRecord {
    pub fn volume(&self) -> f64 {
        self.log_volume.exp()
    }
}

/// Strict pruning rule with a relative rounding allowance.
pub fn should_prune(lf: f64, uf: f64) -> bool {
    lf - PRUNE_TOLERANCE * (1.0 + lf.abs()) > uf
}

/// One row per iteration; row 0 describes the root step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub uf: f64,
    /// Smallest `lf` in the pool; NaN once the pool is empty.
    pub min_lf: f64,
    pub pruned_vol: f64,
    pub selected_vol: f64,
    pub pool_size: usize,
    pub samples: usize,
    pub wall_ms: f64,
    /// Volume of the boxes still in the pool.
    #[serde(skip)]
    pub pool_vol: f64,
}

pub const TRACE_COLUMNS: [&str; 8] =
    ["iter", "uf", "min_lf", "pruned_vol", "selected_vol", "pool_size", "samples", "wall_ms"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    PoolExhausted,
    IterationLimit,
    TimeLimit,
    TargetReached,
    SampleBudget,
    Failed,
}

#[derive(Clone, Debug)]
pub struct PlanResult {
    pub best_value: f64,
    pub best_input: Vec<f64>,
    pub trace: Vec<TraceRow>,
    pub termination: Termination,
    /// False when any bound came from samples.
    pub certified: bool,
    pub evaluated: usize,
    pub failure: Option<String>,
    /// Final pool when `record_boxes` is set.
    pub leaves: Vec<SubdomainRecord>,
    /// Pruned boxes when `record_boxes` is set.
    pub pruned: Vec<BoxDomain>,
}

/// Branch and bound on a graph objective with linear bound propagation.
pub fn plan_graph(
    graph: &CompGraph,
    root: &BoxDomain,
    config: &PlannerConfig,
    warm_start: Option<&[f64]>,
) -> Result<PlanResult> {
    let crown = CrownConfig { mode: config.bounding, stop: config.stop.clone(), ..Default::default() };
    let bounder = GraphBounder::new(graph, crown)?;
    plan(graph, &bounder, root, config, warm_start)
}

/// Branch and bound on the synthetic benchmark with exact box minima.
pub fn plan_synthetic(
    objective: &SyntheticObjective,
    config: &PlannerConfig,
    warm_start: Option<&[f64]>,
) -> Result<PlanResult> {
    plan(objective, &SeparableBounder::new(objective), &objective.domain(), config, warm_start)
}

/// The searcher with its budget cut to at most `cap` evaluations.
fn capped(searcher: &SearcherConfig, cap: usize) -> SearcherConfig {
    if searcher.budget() <= cap {
        return searcher.clone();
    }
    let iterations = searcher.iterations.min(cap).max(1);
    let samples_per_iter = (cap / iterations).max(1);
    SearcherConfig { iterations, samples_per_iter, ..searcher.clone() }
}

struct Child {
    parent: usize,
    depth: usize,
    parent_lf: f64,
    log_volume: f64,
    domain: BoxDomain,
    warm: Option<Vec<f64>>,
    routed: Vec<Sample>,
}

struct State {
    pool: Vec<SubdomainRecord>,
    settled: Vec<SubdomainRecord>,
    best_value: f64,
    best_input: Vec<f64>,
    pruned_vol: f64,
    pruned: Vec<BoxDomain>,
    evaluated: usize,
    certified: bool,
}

impl State {
    fn insert(&mut self, rec: SubdomainRecord) {
        if rec.uf < self.best_value {
            self.best_value = rec.uf;
            self.best_input = rec.best_input.clone();
        }
        if rec.splittable {
            self.pool.push(rec);
        } else {
            self.settled.push(rec);
        }
    }

    fn prune(&mut self, keep_boxes: bool) {
        let uf = self.best_value;
        for list in [&mut self.pool, &mut self.settled] {
            let mut kept = Vec::with_capacity(list.len());
            for rec in list.drain(..) {
                if should_prune(rec.lf, uf) {
                    self.pruned_vol += rec.volume();
                    if keep_boxes {
                        self.pruned.push(rec.domain);
                    }
                } else {
                    kept.push(rec);
                }
            }
            *list = kept;
        }
    }

    fn row(&self, iter: usize, selected_vol: f64, start: &Instant) -> TraceRow {
        let all = self.pool.iter().chain(&self.settled);
        let min_lf = all.clone().map(|r| r.lf).fold(f64::NAN, f64::min);
        TraceRow {
            iter,
            uf: self.best_value,
            min_lf,
            pruned_vol: self.pruned_vol,
            selected_vol,
            pool_size: self.pool.len() + self.settled.len(),
            samples: self.evaluated,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            pool_vol: all.map(|r| r.volume()).sum(),
        }
    }
}

fn merge_top(mut a: Vec<Sample>, b: &[Sample], capacity: usize) -> Vec<Sample> {
    a.extend_from_slice(b);
    a.sort_by(|x, y| x.value.total_cmp(&y.value));
    a.truncate(capacity);
    a
}

fn splittable(domain: &BoxDomain, min_width: f64) -> bool {
    (0..domain.dim()).any(|j| domain.width(j) > min_width)
}

pub fn plan<O: Objective + ?Sized, B: Bounder + ?Sized>(
    objective: &O,
    bounder: &B,
    root: &BoxDomain,
    config: &PlannerConfig,
    warm_start: Option<&[f64]>,
) -> Result<PlanResult> {
    config.validate()?;
    if root.dim() != objective.dim() {
        return Err(Error::ShapeMismatch(format!(
            "root box of dim {} for objective of dim {}",
            root.dim(),
            objective.dim()
        )));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let cap = config.max_samples.unwrap_or(usize::MAX);
    let watch = bounder.watch();

    let root_cfg = SearcherConfig {
        seed: derive_seed(config.searcher.seed ^ config.seed, 0),
        ..capped(&config.searcher, cap)
    };
    let report = search(objective, root, &root_cfg, warm_start, watch)?;
    let bound = bounder.bound(root, &report.ranges)?;
    let mut st = State {
        pool: Vec::new(),
        settled: Vec::new(),
        best_value: f64::INFINITY,
        best_input: report.best_input.clone(),
        pruned_vol: 0.0,
        pruned: Vec::new(),
        evaluated: report.evaluated,
        certified: bound.sound,
    };
    st.insert(SubdomainRecord {
        id: 0,
        parent: None,
        depth: 0,
        domain: root.clone(),
        lf: bound.lf,
        uf: report.best_value,
        best_input: report.best_input,
        top: report.top,
        log_volume: 0.0,
        splittable: splittable(root, config.min_width),
    });
    st.prune(config.record_boxes);
    let mut trace = vec![st.row(0, 0.0, &start)];
    let mut next_id = 1;
    let mut failure = None;

    let termination = loop {
        let iter = trace.len();
        if config.target.is_some_and(|t| st.best_value <= t) {
            break Termination::TargetReached;
        }
        if st.pool.is_empty() {
            break Termination::PoolExhausted;
        }
        if iter > config.max_iterations {
            break Termination::IterationLimit;
        }
        if config.max_wall_ms.is_some_and(|ms| start.elapsed().as_millis() >= ms as u128) {
            break Termination::TimeLimit;
        }
        let remaining = cap.saturating_sub(st.evaluated);
        if remaining < 2 {
            break Termination::SampleBudget;
        }
        let per_child = config.searcher.budget();
        let fit = remaining / (2 * per_child);
        let (n, child_cfg) = if fit >= 1 {
            (config.batch_size.min(fit), config.searcher.clone())
        } else {
            (1, capped(&config.searcher, remaining / 2))
        };

        let selected = pick_out(&mut st.pool, n, config.eta, config.temperature, &mut rng);
        let selected_vol: f64 = selected.iter().map(|r| r.volume()).sum();
        let mut children = Vec::with_capacity(2 * selected.len());
        for rec in selected {
            let j = choose_split(&rec.domain, &rec.top, config.top_percent, config.min_width)
                .expect("pool records are splittable");
            let (lo, up) = rec.domain.bisect(j);
            let (top_lo, top_up): (Vec<Sample>, Vec<Sample>) =
                rec.top.into_iter().partition(|s| goes_low(&rec.domain, j, &s.input));
            let low_has_best = goes_low(&rec.domain, j, &rec.best_input);
            for (domain, routed, warm) in [(lo, top_lo, low_has_best), (up, top_up, !low_has_best)] {
                children.push(Child {
                    parent: rec.id,
                    depth: rec.depth + 1,
                    parent_lf: rec.lf,
                    log_volume: rec.log_volume - LN_2,
                    domain,
                    warm: warm.then(|| rec.best_input.clone()),
                    routed,
                });
            }
        }

        let boxes: Vec<BoxDomain> = children.iter().map(|c| c.domain.clone()).collect();
        let warms: Vec<Option<Vec<f64>>> = children.iter().map(|c| c.warm.clone()).collect();
        let seeds: Vec<u64> = (0..children.len())
            .map(|i| derive_seed(config.searcher.seed ^ config.seed, (next_id + i) as u64))
            .collect();
        let reports = batch_search_with_seeds(objective, &boxes, &child_cfg, &warms, watch, &seeds);
        let outcomes: Vec<Result<(SearchReport, crate::crown::BoundOutcome)>> = reports
            .into_par_iter()
            .zip(boxes.par_iter())
            .map(|(r, b)| {
                let r = r?;
                let bound = bounder.bound(b, &r.ranges)?;
                Ok((r, bound))
            })
            .collect();

        let mut batch = Vec::with_capacity(children.len());
        for (child, outcome) in children.into_iter().zip(outcomes) {
            match outcome {
                Ok((report, bound)) => batch.push((child, report, bound)),
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        if failure.is_some() {
            break Termination::Failed;
        }
        for (child, report, bound) in batch {
            st.evaluated += report.evaluated;
            st.certified &= bound.sound;
            let lf = if bound.sound && st.certified {
                bound.lf.max(child.parent_lf)
            } else {
                bound.lf
            };
            let top = merge_top(child.routed, &report.top, config.searcher.top_capacity);
            let (uf, best_input) = match top.first() {
                Some(s) if s.value < report.best_value => (s.value, s.input.clone()),
                _ => (report.best_value, report.best_input),
            };
            let split_ok = splittable(&child.domain, config.min_width);
            st.insert(SubdomainRecord {
                id: next_id,
                parent: Some(child.parent),
                depth: child.depth,
                domain: child.domain,
                lf,
                uf,
                best_input,
                top,
                log_volume: child.log_volume,
                splittable: split_ok,
            });
            next_id += 1;
        }
        st.prune(config.record_boxes);
        trace.push(st.row(iter, selected_vol, &start));
    };

    let leaves = if config.record_boxes {
        st.pool.iter().chain(&st.settled).cloned().collect()
    } else {
        Vec::new()
    };
    Ok(PlanResult {
        best_value: st.best_value,
        best_input: st.best_input,
        trace,
        termination,
        certified: st.certified,
        evaluated: st.evaluated,
        failure,
        leaves,
        pruned: st.pruned,
    })
}
