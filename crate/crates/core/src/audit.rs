//! Randomized checks of the bounding machinery.
//!
//! Each check compares a bound against an oracle that never touches the
//! propagation code: dense sampling, a grid, or vertex enumeration for
//! linear objectives.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::crown::{
    self, relax_relu, AlphaPolicy, BoundingMode, CrownConfig, Provenance, PreactBounds, StopRule,
};
use crate::domain::BoxDomain;
use crate::error::Result;
use crate::graph::{CompGraph, GraphBuilder};
use crate::linalg::Matrix;
use crate::model_io::generate_model;
use crate::objective::Objective;
use crate::search::{search, SearcherConfig, SearcherKind};

/// Slack for rounding when comparing a bound with an observed value.
pub fn tolerance(v: f64) -> f64 {
    1e-9 * (1.0 + v.abs())
}

const CHUNK: usize = 1 << 15;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckCount {
    pub name: String,
    pub trials: usize,
    pub checks: usize,
    pub violations: usize,
    /// Largest `bound - observed` seen; negative when every check passed
    /// with room to spare.
    pub worst_excess: f64,
    /// Negative control: violations are expected and not counted as failures.
    pub control: bool,
}

impl CheckCount {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            trials: 0,
            checks: 0,
            violations: 0,
            worst_excess: f64::NEG_INFINITY,
            control: name.contains("corrupted"),
        }
    }

    /// Records `bound <= observed` (up to rounding).
    fn lower(&mut self, bound: f64, observed: f64) {
        self.checks += 1;
        let excess = bound - observed;
        self.worst_excess = self.worst_excess.max(excess);
        if excess > tolerance(observed) {
            self.violations += 1;
        }
    }

    /// Records `|a - b| <= tol`.
    fn equal(&mut self, a: f64, b: f64, tol: f64) {
        self.checks += 1;
        let gap = (a - b).abs();
        self.worst_excess = self.worst_excess.max(gap);
        if gap > tol {
            self.violations += 1;
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AuditReport {
    pub checks: Vec<CheckCount>,
}

impl AuditReport {
    /// Violations outside the negative controls.
    pub fn violations(&self) -> usize {
        self.checks.iter().filter(|c| !c.control).map(|c| c.violations).sum()
    }

    /// Whether every negative control that ran caught at least one violation.
    pub fn controls_detected(&self) -> bool {
        self.checks.iter().filter(|c| c.control).all(|c| c.violations > 0)
    }
}

/// A random scalar ReLU network on `d` inputs with 1 to 4 hidden layers of
/// width at most 32. Some networks end in a weighted squared distance so the
/// quadratic relaxation is exercised as well.
pub fn random_mlp_graph(rng: &mut ChaCha8Rng, d: usize) -> Result<CompGraph> {
    let depth = rng.gen_range(1..=4);
    let quadratic = rng.gen_bool(0.5);
    let mut widths = vec![d];
    widths.extend((0..depth).map(|_| rng.gen_range(2..=32)));
    widths.push(if quadratic { 2 } else { 1 });
    let model = generate_model(rng.gen(), &widths)?;

    let mut b = GraphBuilder::new();
    let mut h = b.input(d)?;
    for layer in model.layers() {
        h = b.linear(h, layer.weight.clone(), layer.bias.clone())?;
        if layer.relu {
            h = b.relu(h)?;
        }
    }
    if quadratic {
        let target = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let weights = (0..2).map(|_| rng.gen_range(0.0..2.0)).collect();
        h = b.squared_distance(h, target, weights)?;
    }
    b.build(h)
}

/// A random pure-linear scalar objective: a chain of one to three affine maps.
pub fn random_linear_graph(rng: &mut ChaCha8Rng, d: usize) -> Result<CompGraph> {
    let mut b = GraphBuilder::new();
    let mut h = b.input(d)?;
    let mut width = d;
    let layers = rng.gen_range(1..=3);
    for i in 0..layers {
        let out = if i + 1 == layers { 1 } else { rng.gen_range(1..=8) };
        let data = (0..out * width).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let bias = (0..out).map(|_| rng.gen_range(-1.0..1.0)).collect();
        h = b.linear(h, Matrix::new(out, width, data)?, bias)?;
        width = out;
    }
    if rng.gen_bool(0.5) {
        h = b.scalar_affine(h, rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..1.0))?;
    }
    b.build(h)
}

/// A random sub-box of `[-2, 2]^d` with widths in `[0.05, 2]`.
pub fn random_box(rng: &mut ChaCha8Rng, d: usize) -> BoxDomain {
    let mut lo = Vec::with_capacity(d);
    let mut hi = Vec::with_capacity(d);
    for _ in 0..d {
        let w = rng.gen_range(0.05..2.0);
        let l = rng.gen_range(-2.0..2.0 - w);
        lo.push(l);
        hi.push(l + w);
    }
    BoxDomain::new(lo, hi).expect("ordered bounds")
}

fn vertices(domain: &BoxDomain) -> Vec<f64> {
    let d = domain.dim();
    let mut out = Vec::with_capacity(d << d);
    for mask in 0..1usize << d {
        for j in 0..d {
            out.push(if mask >> j & 1 == 1 { domain.upper()[j] } else { domain.lower()[j] });
        }
    }
    out
}

fn batch_min<O: Objective + ?Sized>(f: &O, points: &[f64]) -> Result<f64> {
    let d = f.dim();
    let mut best = f64::INFINITY;
    for chunk in points.chunks(CHUNK * d) {
        best = f.evaluate_batch(chunk)?.into_iter().fold(best, f64::min);
    }
    Ok(best)
}

/// Minimum over `samples` uniform points plus every vertex of the box.
pub fn sampled_min<O: Objective + ?Sized>(
    f: &O,
    domain: &BoxDomain,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let d = domain.dim();
    let mut best = batch_min(f, &vertices(domain))?;
    let mut left = samples;
    while left > 0 {
        let m = left.min(CHUNK);
        let mut pts = Vec::with_capacity(m * d);
        for _ in 0..m {
            for j in 0..d {
                pts.push(rng.gen_range(domain.lower()[j]..=domain.upper()[j]));
            }
        }
        best = best.min(batch_min(f, &pts)?);
        left -= m;
    }
    Ok(best)
}

/// Minimum over an `n^d` grid spanning the box, endpoints included.
pub fn grid_min<O: Objective + ?Sized>(f: &O, domain: &BoxDomain, n: usize) -> Result<f64> {
    let d = domain.dim();
    let n = n.max(2);
    let total = n.pow(d as u32);
    let coord = |j: usize, i: usize| {
        let (l, u) = (domain.lower()[j], domain.upper()[j]);
        if i + 1 == n {
            u
        } else {
            l + (u - l) * i as f64 / (n - 1) as f64
        }
    };
    let mut best = f64::INFINITY;
    let mut start = 0;
    while start < total {
        let end = (start + CHUNK).min(total);
        let mut pts = Vec::with_capacity((end - start) * d);
        for mut idx in start..end {
            for j in 0..d {
                pts.push(coord(j, idx % n));
                idx /= n;
            }
        }
        best = best.min(batch_min(f, &pts)?);
        start = end;
    }
    Ok(best)
}

/// Relaxations of random intervals evaluated at `points` points each.
pub fn sandwich_check(rng: &mut ChaCha8Rng, relaxations: usize, points: usize) -> Result<CheckCount> {
    let mut c = CheckCount::new("relaxation sandwich");
    for _ in 0..relaxations {
        c.trials += 1;
        let n = rng.gen_range(1..=8);
        let mut l = Vec::with_capacity(n);
        let mut u = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = rng.gen_range(-5.0..5.0);
            let b: f64 = rng.gen_range(-5.0..5.0);
            l.push(a.min(b));
            u.push(a.max(b));
        }
        let policy = if rng.gen_bool(0.5) {
            AlphaPolicy::Adaptive
        } else {
            AlphaPolicy::Fixed(rng.gen_range(0.0..=1.0))
        };
        let r = relax_relu(&l, &u, policy)?;
        for _ in 0..points {
            for i in 0..n {
                let z = if u[i] > l[i] { rng.gen_range(l[i]..=u[i]) } else { l[i] };
                let y = z.max(0.0);
                c.lower(r.lower_slope[i] * z + r.lower_offset[i], y);
                c.lower(y, r.upper_slope[i] * z + r.upper_offset[i]);
            }
        }
    }
    Ok(c)
}

fn modes() -> Vec<(&'static str, CrownConfig)> {
    let cfg = |mode, stop| CrownConfig { mode, stop, alpha: AlphaPolicy::Adaptive };
    vec![
        ("full", cfg(BoundingMode::FullCrown, StopRule::LastRelu)),
        ("early-stop", cfg(BoundingMode::EarlyStopInterval, StopRule::LastRelu)),
        ("interval", cfg(BoundingMode::EarlyStopInterval, StopRule::None)),
    ]
}

/// Interval bounds collapsed to their midpoints: a deliberately wrong input
/// used to confirm the checks can fail.
fn corrupted_bound(graph: &CompGraph, domain: &BoxDomain) -> Result<f64> {
    let stop = crown::resolve_stop_set(graph, &StopRule::LastRelu)?;
    let need: BTreeSet<_> = crown::required_bounds(graph, graph.output(), &stop);
    let honest = crown::interval_preact(graph, domain, &need)?;
    let mut bad = PreactBounds::new();
    for (node, b) in honest.iter() {
        let mid: Vec<f64> = b.lower.iter().zip(&b.upper).map(|(l, u)| 0.5 * (l + u)).collect();
        bad.insert(node, mid.clone(), mid, Provenance::Interval)?;
    }
    Ok(crown::bound_with(graph, &stop, &bad, AlphaPolicy::Adaptive)?.lf)
}

/// Bounds on random networks against dense sampling, and against an
/// `grid x grid` grid when `d <= 2`. With `corrupt`, bounds are computed
/// from collapsed pre-activation intervals instead.
pub fn soundness_check(
    rng: &mut ChaCha8Rng,
    trials: usize,
    samples: usize,
    grid: usize,
    corrupt: bool,
) -> Result<CheckCount> {
    let mut c = CheckCount::new(if corrupt { "soundness (corrupted bounds)" } else { "soundness" });
    for _ in 0..trials {
        c.trials += 1;
        let d = rng.gen_range(1..=4);
        let g = random_mlp_graph(rng, d)?;
        let dom = random_box(rng, d);
        let mut observed = sampled_min(&g, &dom, samples, rng)?;
        if d <= 2 && grid > 0 {
            observed = observed.min(grid_min(&g, &dom, grid)?);
        }
        if corrupt {
            c.lower(corrupted_bound(&g, &dom)?, observed);
            continue;
        }
        for (_, cfg) in modes() {
            c.lower(crown::lower_bound(&g, &dom, &cfg, None)?.lf, observed);
        }
    }
    Ok(c)
}

/// Bounds on random linear objectives against the best box vertex, and the
/// full and early-stop modes against each other.
pub fn linear_check(rng: &mut ChaCha8Rng, trials: usize) -> Result<CheckCount> {
    let mut c = CheckCount::new("linear exactness");
    for _ in 0..trials {
        c.trials += 1;
        let d = rng.gen_range(1..=6);
        let g = random_linear_graph(rng, d)?;
        let dom = random_box(rng, d);
        let exact = batch_min(&g, &vertices(&dom))?;
        let mut got = Vec::new();
        for (_, cfg) in modes() {
            let lf = crown::lower_bound(&g, &dom, &cfg, None)?.lf;
            c.equal(lf, exact, 1e-9);
            got.push(lf);
        }
        c.equal(got[0], got[1], 1e-9);
    }
    Ok(c)
}

/// Empirical-mode bounds against the best sample they were derived from.
pub fn empirical_check(rng: &mut ChaCha8Rng, trials: usize, samples: usize) -> Result<CheckCount> {
    let mut c = CheckCount::new("empirical consistency");
    for _ in 0..trials {
        c.trials += 1;
        let d = rng.gen_range(1..=4);
        let g = random_mlp_graph(rng, d)?;
        let dom = random_box(rng, d);
        empirical_on(&mut c, &g, &dom, rng.gen(), samples)?;
    }
    Ok(c)
}

fn empirical_on(c: &mut CheckCount, g: &CompGraph, dom: &BoxDomain, seed: u64, samples: usize) -> Result<()> {
    let cfg = CrownConfig { mode: BoundingMode::EarlyStopEmpirical, ..Default::default() };
    let stop = crown::resolve_stop_set(g, &cfg.stop)?;
    let watch = crown::watch_nodes(g, &stop);
    let iterations = 5;
    let search_cfg =
        SearcherConfig::new(SearcherKind::cem(), samples.div_ceil(iterations).max(1), iterations, seed);
    let report = search(g, dom, &search_cfg, None, &watch)?;
    let lf = crown::lower_bound(g, dom, &cfg, Some(&report.ranges))?.lf;
    c.lower(lf, report.best_value);
    Ok(())
}

#[derive(Clone, Debug)]
pub struct AuditOptions {
    pub trials: usize,
    pub samples: usize,
    pub grid: usize,
    pub seed: u64,
    /// Add the corrupted-bounds negative control.
    pub corrupt: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self { trials: 50, samples: 10_000, grid: 200, seed: 0, corrupt: false }
    }
}

/// The full property suite on random networks.
pub fn audit_random(opts: &AuditOptions) -> Result<AuditReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut checks = vec![
        sandwich_check(&mut rng, opts.trials * 10, 100)?,
        soundness_check(&mut rng, opts.trials, opts.samples, opts.grid, false)?,
        linear_check(&mut rng, opts.trials)?,
        empirical_check(&mut rng, opts.trials, opts.samples.min(5_000))?,
    ];
    if opts.corrupt {
        checks.push(soundness_check(&mut rng, opts.trials, opts.samples, 0, true)?);
    }
    Ok(AuditReport { checks })
}

/// Soundness and empirical consistency of one objective on random sub-boxes
/// of `domain`.
pub fn audit_graph(graph: &CompGraph, domain: &BoxDomain, opts: &AuditOptions) -> Result<AuditReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut sound = CheckCount::new("soundness");
    let mut corrupt = CheckCount::new("soundness (corrupted bounds)");
    let mut emp = CheckCount::new("empirical consistency");
    for trial in 0..opts.trials {
        let sub = if trial == 0 { domain.clone() } else { random_sub_box(&mut rng, domain) };
        let observed = sampled_min(graph, &sub, opts.samples, &mut rng)?;
        sound.trials += 1;
        for (_, cfg) in modes() {
            sound.lower(crown::lower_bound(graph, &sub, &cfg, None)?.lf, observed);
        }
        if opts.corrupt {
            corrupt.trials += 1;
            corrupt.lower(corrupted_bound(graph, &sub)?, observed);
        }
        emp.trials += 1;
        empirical_on(&mut emp, graph, &sub, rng.gen(), opts.samples.min(5_000))?;
    }
    let mut checks = vec![sound, emp];
    if opts.corrupt {
        checks.push(corrupt);
    }
    Ok(AuditReport { checks })
}

fn random_sub_box(rng: &mut ChaCha8Rng, domain: &BoxDomain) -> BoxDomain {
    let mut lo = Vec::with_capacity(domain.dim());
    let mut hi = Vec::with_capacity(domain.dim());
    for j in 0..domain.dim() {
        let (l, u) = (domain.lower()[j], domain.upper()[j]);
        let a = rng.gen_range(0.0..=1.0);
        let b = rng.gen_range(0.0..=1.0);
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        lo.push(l + (u - l) * a);
        hi.push(l + (u - l) * b);
    }
    BoxDomain::new(lo, hi).expect("ordered bounds")
}
