//! Sampling-based searchers returning the best objective found in a box.
//!
//! Every searcher spends exactly `samples_per_iter * iterations` objective
//! evaluations, clamps every sample into the box, and always evaluates the
//! warm start when one is given. The random stream consumed per iteration
//! does not depend on the iteration count, so a longer run replays a shorter
//! one before continuing.

mod cem;
mod gd;
mod mppi;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::graph::{ActivationRanges, NodeId};
use crate::objective::Objective;

pub const DEFAULT_TOP_CAPACITY: usize = 512;
pub const DEFAULT_SAMPLES_PER_ITER: usize = 500;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SearcherKind {
    /// Independent CEM agents with diagonal Gaussians.
    Cem {
        agents: usize,
        elites: usize,
        /// Variance floor as a fraction of the squared box half-width.
        jitter: f64,
    },
    /// A grid of MPPI instances over temperature and noise ratios.
    Mppi {
        /// Noise std as a fraction of the box half-width.
        noise_std: f64,
        /// Reward weight: samples are weighted by `exp(-temperature * c)`
        /// with costs `c` min-max normalized within the instance.
        temperature: f64,
        temperature_ratios: Vec<f64>,
        noise_ratios: Vec<f64>,
    },
    /// Multi-start projected gradient descent; start `i` uses ratio `i mod len`.
    Gd { base_step: f64, step_ratios: Vec<f64> },
}

impl SearcherKind {
    pub fn cem() -> Self {
        SearcherKind::Cem { agents: 10, elites: 10, jitter: 0.001 }
    }

    pub fn mppi() -> Self {
        SearcherKind::Mppi {
            noise_std: 0.15,
            temperature: 20.0,
            temperature_ratios: vec![0.1, 0.5, 1.0, 1.5, 2.0],
            noise_ratios: vec![0.1, 0.5, 1.0, 1.5, 2.0],
        }
    }

    pub fn gd() -> Self {
        SearcherKind::Gd {
            base_step: 0.01,
            step_ratios: vec![0.05, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 5.0, 10.0],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SearcherKind::Cem { .. } => "cem",
            SearcherKind::Mppi { .. } => "mppi",
            SearcherKind::Gd { .. } => "gd",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearcherConfig {
    pub kind: SearcherKind,
    pub samples_per_iter: usize,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default = "default_top_capacity")]
    pub top_capacity: usize,
}

fn default_top_capacity() -> usize {
    DEFAULT_TOP_CAPACITY
}

impl SearcherConfig {
    pub fn new(kind: SearcherKind, samples_per_iter: usize, iterations: usize, seed: u64) -> Self {
        Self { kind, samples_per_iter, iterations, seed, top_capacity: DEFAULT_TOP_CAPACITY }
    }

    /// 20 iterations (16 for gradient descent) of
    /// [`DEFAULT_SAMPLES_PER_ITER`] samples.
    pub fn with_defaults(kind: SearcherKind, seed: u64) -> Self {
        let iterations = match kind {
            SearcherKind::Gd { .. } => 16,
            _ => 20,
        };
        Self::new(kind, DEFAULT_SAMPLES_PER_ITER, iterations, seed)
    }

    pub fn budget(&self) -> usize {
        self.samples_per_iter * self.iterations
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.samples_per_iter == 0 || self.iterations == 0 {
            return bad("search budget must be positive".into());
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match &self.kind {
            SearcherKind::Cem { agents, elites, jitter } => {
                if *agents == 0 || *elites == 0 {
                    return bad("cem needs at least one agent and one elite".into());
                }
                if !(*jitter >= 0.0 && jitter.is_finite()) {
                    return bad("cem jitter must be >= 0".into());
                }
            }
            SearcherKind::Mppi { noise_std, temperature, temperature_ratios, noise_ratios } => {
                if !positive(*noise_std) || !positive(*temperature) {
                    return bad("mppi noise and temperature must be > 0".into());
                }
                if temperature_ratios.is_empty()
                    || noise_ratios.is_empty()
                    || !temperature_ratios.iter().chain(noise_ratios).all(|&r| positive(r))
                {
                    return bad("mppi ratio grids must be non-empty and positive".into());
                }
            }
            SearcherKind::Gd { base_step, step_ratios } => {
                if !positive(*base_step)
                    || step_ratios.is_empty()
                    || !step_ratios.iter().all(|&r| positive(r))
                {
                    return bad("gd steps must be positive".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct SearchReport {
    pub best_value: f64,
    pub best_input: Vec<f64>,
    /// Best samples, ascending by value.
    pub top: Vec<Sample>,
    /// Ranges of the watched nodes over every evaluated sample.
    pub ranges: ActivationRanges,
    pub evaluated: usize,
    /// Best value so far after each iteration.
    pub history: Vec<f64>,
}

/// Counts evaluations and keeps the incumbent, the best samples and the
/// watched-node ranges.
pub(crate) struct Recorder<'a, O: Objective + ?Sized> {
    objective: &'a O,
    watch: &'a [NodeId],
    capacity: usize,
    top: Vec<Sample>,
    ranges: ActivationRanges,
    best: Option<Sample>,
    evaluated: usize,
    history: Vec<f64>,
}

impl<'a, O: Objective + ?Sized> Recorder<'a, O> {
    fn new(objective: &'a O, watch: &'a [NodeId], capacity: usize) -> Self {
        Self {
            objective,
            watch,
            capacity,
            top: Vec::new(),
            ranges: ActivationRanges::new(),
            best: None,
            evaluated: 0,
            history: Vec::new(),
        }
    }

    fn evaluate(&mut self, batch: &[f64]) -> Result<Vec<f64>> {
        let d = self.objective.dim();
        let values = if self.watch.is_empty() {
            self.objective.evaluate_batch(batch)?
        } else {
            self.objective.evaluate_recording(batch, self.watch, &mut self.ranges)?
        };
        self.evaluated += values.len();
        for (x, &v) in batch.chunks_exact(d).zip(&values) {
            if self.best.as_ref().is_none_or(|b| v < b.value) {
                self.best = Some(Sample { input: x.to_vec(), value: v });
            }
            if self.capacity > 0 {
                self.top.push(Sample { input: x.to_vec(), value: v });
            }
        }
        if self.top.len() > 2 * self.capacity.max(1) {
            self.trim();
        }
        if let Some(b) = &self.best {
            self.history.push(b.value);
        }
        Ok(values)
    }

    fn trim(&mut self) {
        self.top.sort_by(|a, b| a.value.total_cmp(&b.value));
        self.top.truncate(self.capacity);
    }

    fn finish(mut self) -> SearchReport {
        self.trim();
        let best = self.best.expect("at least one evaluation");
        SearchReport {
            best_value: best.value,
            best_input: best.input,
            top: self.top,
            ranges: self.ranges,
            evaluated: self.evaluated,
            history: self.history,
        }
    }
}

/// Uniform point in the box.
pub(crate) fn uniform_point(rng: &mut ChaCha8Rng, domain: &BoxDomain) -> Vec<f64> {
    (0..domain.dim())
        .map(|j| {
            let (l, u) = (domain.lower()[j], domain.upper()[j]);
            if l == u {
                l
            } else {
                rng.gen_range(l..=u)
            }
        })
        .collect()
}

/// `n` parts of `total`, the first `total % n` one larger.
pub(crate) fn split_evenly(total: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| total / n + usize::from(i < total % n)).collect()
}

pub fn search<O: Objective + ?Sized>(
    objective: &O,
    domain: &BoxDomain,
    config: &SearcherConfig,
    warm_start: Option<&[f64]>,
    watch: &[NodeId],
) -> Result<SearchReport> {
    config.validate()?;
    if domain.dim() != objective.dim() {
        return Err(Error::ShapeMismatch(format!(
            "box of dim {} for objective of dim {}",
            domain.dim(),
            objective.dim()
        )));
    }
    let warm = match warm_start {
        Some(w) if w.len() != domain.dim() => {
            return Err(Error::ShapeMismatch(format!(
                "warm start of dim {} for box of dim {}",
                w.len(),
                domain.dim()
            )))
        }
        Some(w) => {
            let mut w = w.to_vec();
            domain.clamp(&mut w);
            Some(w)
        }
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rec = Recorder::new(objective, watch, config.top_capacity);
    match &config.kind {
        SearcherKind::Cem { agents, elites, jitter } => cem::run(
            &mut rec, &mut rng, domain, config, *agents, *elites, *jitter, warm.as_deref(),
        )?,
        SearcherKind::Mppi { noise_std, temperature, temperature_ratios, noise_ratios } => {
            let params = mppi::Params {
                noise_std: *noise_std,
                temperature: *temperature,
                temperature_ratios,
                noise_ratios,
            };
            mppi::run(&mut rec, &mut rng, domain, config, &params, warm.as_deref())?
        }
        SearcherKind::Gd { base_step, step_ratios } => gd::run(
            &mut rec, &mut rng, domain, config, *base_step, step_ratios, warm.as_deref(),
        )?,
    }
    Ok(rec.finish())
}

/// Seed of the `index`-th box of a batch.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    master ^ index
}

/// Independent searches, one per box, seeded by [`derive_seed`]. A failing box
/// does not affect its siblings.
pub fn batch_search<O: Objective + ?Sized>(
    objective: &O,
    boxes: &[BoxDomain],
    config: &SearcherConfig,
    warm_starts: &[Option<Vec<f64>>],
    watch: &[NodeId],
) -> Vec<Result<SearchReport>> {
    let seeds: Vec<u64> = (0..boxes.len()).map(|i| derive_seed(config.seed, i as u64)).collect();
    batch_search_with_seeds(objective, boxes, config, warm_starts, watch, &seeds)
}

pub fn batch_search_with_seeds<O: Objective + ?Sized>(
    objective: &O,
    boxes: &[BoxDomain],
    config: &SearcherConfig,
    warm_starts: &[Option<Vec<f64>>],
    watch: &[NodeId],
    seeds: &[u64],
) -> Vec<Result<SearchReport>> {
    boxes
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            let cfg = SearcherConfig { seed: seeds[i], ..config.clone() };
            let warm = warm_starts.get(i).and_then(|w| w.as_deref());
            search(objective, b, &cfg, warm, watch)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{CompGraph, GraphBuilder};

    fn sphere(d: usize) -> CompGraph {
        let mut b = GraphBuilder::new();
        let x = b.input(d).unwrap();
        let q = b.squared_distance(x, vec![0.0; d], vec![1.0; d]).unwrap();
        b.build(q).unwrap()
    }

    fn kinds() -> Vec<SearcherKind> {
        vec![SearcherKind::cem(), SearcherKind::mppi(), SearcherKind::gd()]
    }

    #[test]
    fn convex_quadratic_is_solved_by_every_searcher() {
        let g = sphere(4);
        let dom = BoxDomain::cube(4, -1.0, 1.0).unwrap();
        for kind in kinds() {
            let cfg = SearcherConfig::with_defaults(kind.clone(), 1);
            let r = search(&g, &dom, &cfg, None, &[]).unwrap();
            assert!(r.best_value <= 1e-3, "{}: {}", kind.name(), r.best_value);
            assert_eq!(r.evaluated, cfg.budget());
            assert!(dom.contains(&r.best_input));
            assert!(r.top.iter().all(|s| dom.contains(&s.input)));
            assert!(r.top.windows(2).all(|w| w[0].value <= w[1].value));
        }
    }

    #[test]
    fn warm_start_is_never_lost() {
        let g = sphere(3);
        let dom = BoxDomain::cube(3, -1.0, 1.0).unwrap();
        for kind in kinds() {
            let cfg = SearcherConfig::new(kind, 7, 2, 5);
            let r = search(&g, &dom, &cfg, Some(&[0.0, 0.0, 0.0]), &[]).unwrap();
            assert_eq!(r.best_value, 0.0);
        }
    }

    #[test]
    fn zero_volume_box_and_zero_budget() {
        let g = sphere(2);
        let dom = BoxDomain::point(&[0.5, -0.25]).unwrap();
        for kind in kinds() {
            let r = search(&g, &dom, &SearcherConfig::new(kind.clone(), 5, 3, 0), None, &[]).unwrap();
            assert_eq!(r.best_input, vec![0.5, -0.25]);
            let zero = SearcherConfig::new(kind, 0, 3, 0);
            assert!(matches!(search(&g, &dom, &zero, None, &[]), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn batch_is_deterministic_and_isolated() {
        let g = sphere(2);
        let dom = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let cfg = SearcherConfig::new(SearcherKind::cem(), 20, 3, 9);
        let boxes = vec![dom.clone(), dom.clone()];
        let out = batch_search_with_seeds(&g, &boxes, &cfg, &[], &[], &[4, 4]);
        let (a, b) = (out[0].as_ref().unwrap(), out[1].as_ref().unwrap());
        assert_eq!(a.best_input, b.best_input);
        assert_eq!(a.top, b.top);
        assert!(batch_search(&g, &[], &cfg, &[], &[]).is_empty());
        let bad = vec![dom.clone(), BoxDomain::cube(3, 0.0, 1.0).unwrap()];
        let out = batch_search(&g, &bad, &cfg, &[], &[]);
        assert!(out[0].is_ok() && out[1].is_err());
    }
}
