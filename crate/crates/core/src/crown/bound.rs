//! Lower bounds of a graph objective over a box.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::preact::{PreactBounds, Provenance};
use super::propagate::{backward_propagate, concretize, required_bounds};
use super::relax::AlphaPolicy;
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::graph::{hinge_interval, ActivationRanges, CompGraph, Interval, NodeId, NodeKind};
use crate::linalg::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundingMode {
    /// Every pre-activation bound from its own propagation to the input box.
    FullCrown,
    /// Propagate to the stop set; interval bounds everywhere else.
    #[default]
    EarlyStopInterval,
    /// Propagate to the stop set; bounds from recorded sample ranges, falling
    /// back to intervals for nodes without records. Not sound.
    EarlyStopEmpirical,
}

/// Which nodes absorb the backward flow.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    /// The last ReLU of the graph (the final step's last hidden layer).
    #[default]
    LastRelu,
    /// Every predicted state (`state[t]` labels).
    EveryStepOutput,
    Custom(Vec<NodeId>),
    None,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CrownConfig {
    pub mode: BoundingMode,
    pub stop: StopRule,
    pub alpha: AlphaPolicy,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundOutcome {
    pub lf: f64,
    /// False when any bound used came from samples.
    pub sound: bool,
}

pub fn resolve_stop_set(graph: &CompGraph, rule: &StopRule) -> Result<BTreeSet<NodeId>> {
    let ancestors = graph.ancestors(graph.output());
    Ok(match rule {
        StopRule::None => BTreeSet::new(),
        StopRule::LastRelu => graph
            .nodes_of_kind(|k| *k == NodeKind::Relu)
            .into_iter()
            .filter(|v| ancestors.contains(v))
            .max()
            .into_iter()
            .collect(),
        StopRule::EveryStepOutput => graph
            .nodes_with_label_prefix("state[")
            .into_iter()
            .filter(|v| ancestors.contains(v))
            .collect(),
        StopRule::Custom(list) => {
            if let Some(&bad) = list.iter().find(|v| !ancestors.contains(v)) {
                return Err(Error::UnreachableFrontier(bad));
            }
            list.iter().copied().collect()
        }
    })
}

/// Nodes whose sample ranges empirical bounding may consume.
pub fn watch_nodes(graph: &CompGraph, stop: &BTreeSet<NodeId>) -> Vec<NodeId> {
    let mut watch: BTreeSet<NodeId> = required_bounds(graph, graph.output(), stop);
    for node in graph.nodes() {
        match node.kind {
            NodeKind::Relu | NodeKind::SquaredDistance { .. } => {
                watch.insert(node.inputs[0]);
            }
            NodeKind::PenaltyHinge { .. } => {
                watch.insert(node.id);
            }
            _ => {}
        }
    }
    watch.remove(&graph.input());
    watch.into_iter().collect()
}

fn check_box(graph: &CompGraph, domain: &BoxDomain) -> Result<()> {
    if domain.dim() != graph.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "box of dim {} for graph input dim {}",
            domain.dim(),
            graph.input_dim()
        )));
    }
    Ok(())
}

fn insert_box(graph: &CompGraph, domain: &BoxDomain, p: &mut PreactBounds) -> Result<()> {
    p.insert(
        graph.input(),
        domain.lower().to_vec(),
        domain.upper().to_vec(),
        Provenance::Interval,
    )
}

/// Interval bounds for `nodes`.
pub fn interval_preact(
    graph: &CompGraph,
    domain: &BoxDomain,
    nodes: &BTreeSet<NodeId>,
) -> Result<PreactBounds> {
    let iv = graph.interval_forward(domain)?;
    let mut p = PreactBounds::new();
    for &v in nodes {
        p.insert(v, iv[v].lower.clone(), iv[v].upper.clone(), Provenance::Interval)?;
    }
    insert_box(graph, domain, &mut p)?;
    Ok(p)
}

/// Recorded ranges for `nodes` where available, interval bounds elsewhere.
pub fn empirical_preact(
    graph: &CompGraph,
    domain: &BoxDomain,
    nodes: &BTreeSet<NodeId>,
    ranges: &ActivationRanges,
) -> Result<PreactBounds> {
    let mut p = PreactBounds::new();
    let mut iv: Option<Vec<Interval>> = None;
    for &v in nodes {
        if v == graph.input() {
            continue;
        }
        match ranges.get(v) {
            Some(rec) if rec.samples > 0 && rec.lower.len() == graph.node(v).dim => p.insert(
                v,
                rec.lower.clone(),
                rec.upper.clone(),
                Provenance::Empirical { samples: rec.samples },
            )?,
            _ => {
                if iv.is_none() {
                    iv = Some(graph.interval_forward(domain)?);
                }
                let iv = iv.as_ref().expect("computed");
                p.insert(v, iv[v].lower.clone(), iv[v].upper.clone(), Provenance::Interval)?;
            }
        }
    }
    insert_box(graph, domain, &mut p)?;
    Ok(p)
}

/// Bounds on every ReLU and squared-distance input and every hinge output,
/// each from a propagation `[I; -I]` to the input box, intersected with
/// interval bounds. Cost grows quadratically with depth.
pub fn crown_preact(graph: &CompGraph, domain: &BoxDomain, alpha: AlphaPolicy) -> Result<PreactBounds> {
    check_box(graph, domain)?;
    let iv = graph.interval_forward(domain)?;
    let ancestors = graph.ancestors(graph.output());
    let mut targets = BTreeSet::new();
    for &v in &ancestors {
        let node = graph.node(v);
        if matches!(
            node.kind,
            NodeKind::Relu | NodeKind::SquaredDistance { .. } | NodeKind::PenaltyHinge { .. }
        ) {
            targets.insert(node.inputs[0]);
        }
    }
    let mut p = PreactBounds::new();
    insert_box(graph, domain, &mut p)?;
    let none = BTreeSet::new();
    for v in graph.topological_order() {
        let node = graph.node(v);
        if let NodeKind::PenaltyHinge { center, size, scale } = &node.kind {
            if !ancestors.contains(&v) {
                continue;
            }
            let x = p.require(node.inputs[0])?;
            let (lo, hi) = hinge_interval(&x.lower, &x.upper, center, *size, *scale);
            let (lo, hi) = intersect(&lo, &hi, &iv[v]);
            p.insert(v, lo, hi, Provenance::Crown)?;
            continue;
        }
        if !targets.contains(&v) || node.kind.is_leaf() {
            if let NodeKind::Constant { value } = &node.kind {
                if targets.contains(&v) {
                    p.insert(v, value.clone(), value.clone(), Provenance::Interval)?;
                }
            }
            continue;
        }
        let m = node.dim;
        let mut c = Matrix::zeros(2 * m, m);
        for j in 0..m {
            c.set(j, j, 1.0);
            c.set(m + j, j, -1.0);
        }
        let lb = backward_propagate(graph, v, c, &none, &p, alpha)?;
        let rows = concretize(&lb, &p)?;
        let lo: Vec<f64> = rows[..m].to_vec();
        let hi: Vec<f64> = rows[m..].iter().map(|x| -x).collect();
        let (lo, hi) = intersect(&lo, &hi, &iv[v]);
        p.insert(v, lo, hi, Provenance::Crown)?;
    }
    Ok(p)
}

/// Intersection of two sound enclosures; rounding can leave the ends crossed
/// by an ulp, in which case they are swapped.
fn intersect(lo: &[f64], hi: &[f64], iv: &Interval) -> (Vec<f64>, Vec<f64>) {
    let mut l = Vec::with_capacity(lo.len());
    let mut u = Vec::with_capacity(lo.len());
    for j in 0..lo.len() {
        let a = lo[j].max(iv.lower[j]);
        let b = hi[j].min(iv.upper[j]);
        l.push(a.min(b));
        u.push(a.max(b));
    }
    (l, u)
}

/// Lower bound on the graph output over `domain`.
pub fn lower_bound(
    graph: &CompGraph,
    domain: &BoxDomain,
    config: &CrownConfig,
    ranges: Option<&ActivationRanges>,
) -> Result<BoundOutcome> {
    check_box(graph, domain)?;
    let o = graph.output();
    let (stop, preact) = match config.mode {
        BoundingMode::FullCrown => (BTreeSet::new(), crown_preact(graph, domain, config.alpha)?),
        BoundingMode::EarlyStopInterval => {
            let stop = resolve_stop_set(graph, &config.stop)?;
            let need = required_bounds(graph, o, &stop);
            let p = interval_preact(graph, domain, &need)?;
            (stop, p)
        }
        BoundingMode::EarlyStopEmpirical => {
            let stop = resolve_stop_set(graph, &config.stop)?;
            let need = required_bounds(graph, o, &stop);
            let empty = ActivationRanges::new();
            let p = empirical_preact(graph, domain, &need, ranges.unwrap_or(&empty))?;
            (stop, p)
        }
    };
    bound_with(graph, &stop, &preact, config.alpha)
}

/// Lower bound on the graph output using caller-supplied bounds.
pub fn bound_with(
    graph: &CompGraph,
    stop: &BTreeSet<NodeId>,
    preact: &PreactBounds,
    alpha: AlphaPolicy,
) -> Result<BoundOutcome> {
    let lb = backward_propagate(graph, graph.output(), Matrix::identity(1), stop, preact, alpha)?;
    let sound = lb.anchors.keys().chain(required_bounds(graph, graph.output(), stop).iter())
        .all(|v| preact.get(*v).is_none_or(|b| b.provenance.is_sound()));
    Ok(BoundOutcome { lf: concretize(&lb, preact)?[0], sound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    fn mlp_graph() -> CompGraph {
        let mut b = GraphBuilder::new();
        let x = b.input(2).unwrap();
        let w1 = Matrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 1.0], vec![-1.0, 0.3]]).unwrap();
        let z1 = b.linear(x, w1, vec![0.1, -0.2, 0.0]).unwrap();
        let r1 = b.relu(z1).unwrap();
        let w2 = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![-1.0, 1.0, 1.0]]).unwrap();
        let z2 = b.linear(r1, w2, vec![0.0, 0.3]).unwrap();
        let r2 = b.relu(z2).unwrap();
        let o = b.linear(r2, Matrix::from_rows(&[vec![1.0, -1.5]]).unwrap(), vec![0.2]).unwrap();
        b.build(o).unwrap()
    }

    fn grid_min(g: &CompGraph, n: usize) -> f64 {
        let mut batch = Vec::with_capacity(2 * n * n);
        for i in 0..n {
            for j in 0..n {
                batch.push(-1.0 + 2.0 * i as f64 / (n - 1) as f64);
                batch.push(-1.0 + 2.0 * j as f64 / (n - 1) as f64);
            }
        }
        g.evaluate(&batch).unwrap().into_iter().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn every_mode_is_below_the_grid_minimum() {
        let g = mlp_graph();
        let dom = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let min = grid_min(&g, 301);
        for mode in [BoundingMode::FullCrown, BoundingMode::EarlyStopInterval] {
            for stop in [StopRule::LastRelu, StopRule::None] {
                let cfg = CrownConfig { mode, stop, alpha: AlphaPolicy::Adaptive };
                let out = lower_bound(&g, &dom, &cfg, None).unwrap();
                assert!(out.sound);
                assert!(out.lf <= min + 1e-12, "{mode:?}: {} > {min}", out.lf);
            }
        }
    }

    #[test]
    fn custom_stop_must_be_reachable() {
        let mut b = GraphBuilder::new();
        let x = b.input(1).unwrap();
        let dangling = b.relu(x).unwrap();
        let o = b.scalar_affine(x, 2.0, 0.0).unwrap();
        let g = b.build(o).unwrap();
        let cfg = CrownConfig { stop: StopRule::Custom(vec![dangling]), ..Default::default() };
        let dom = BoxDomain::cube(1, 0.0, 1.0).unwrap();
        assert!(matches!(lower_bound(&g, &dom, &cfg, None), Err(Error::UnreachableFrontier(_))));
    }

    #[test]
    fn empirical_mode_uses_records() {
        let g = mlp_graph();
        let dom = BoxDomain::cube(2, -1.0, 1.0).unwrap();
        let stop = resolve_stop_set(&g, &StopRule::LastRelu).unwrap();
        let watch = watch_nodes(&g, &stop);
        let batch: Vec<f64> = (0..200).flat_map(|i| {
            let t = i as f64 / 199.0;
            [2.0 * t - 1.0, (7.0 * t).sin()]
        }).collect();
        let mut ranges = ActivationRanges::new();
        let f = g.evaluate_recording(&batch, &watch, &mut ranges).unwrap();
        let cfg = CrownConfig { mode: BoundingMode::EarlyStopEmpirical, ..Default::default() };
        let out = lower_bound(&g, &dom, &cfg, Some(&ranges)).unwrap();
        assert!(!out.sound);
        let min = f.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(out.lf <= min + 1e-12);
    }
}
