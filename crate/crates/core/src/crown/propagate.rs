//! Backward linear bound propagation with early stopping.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::preact::PreactBounds;
use super::relax::{relax_relu, AlphaPolicy};
use crate::error::{Error, Result};
use crate::graph::{CompGraph, NodeId, NodeKind};
use crate::linalg::Matrix;

/// Row-wise linear lower bounds `sum_v A_v g_v(u) + offset` on the rows of
/// `C g_start(u)` for the coefficient matrix `C` the propagation started from.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearBounds {
    pub offset: Vec<f64>,
    /// Coefficients per frontier node; each matrix is `rows x dim(node)`.
    pub anchors: BTreeMap<NodeId, Matrix>,
}

impl LinearBounds {
    pub fn rows(&self) -> usize {
        self.offset.len()
    }

    /// Value of the linear form given every anchor's output.
    pub fn evaluate(&self, outputs: impl Fn(NodeId) -> Vec<f64>) -> Vec<f64> {
        let mut v = self.offset.clone();
        for (&node, a) in &self.anchors {
            let g = outputs(node);
            for (r, out) in v.iter_mut().enumerate() {
                *out += a.row(r).iter().zip(&g).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        v
    }
}

/// Whether the backward flow ends at `v`.
fn absorbs(graph: &CompGraph, stop: &BTreeSet<NodeId>, v: NodeId) -> bool {
    let kind = &graph.node(v).kind;
    kind.is_leaf() || stop.contains(&v) || matches!(kind, NodeKind::PenaltyHinge { .. })
}

/// Nodes reached from `start` by the backward flow, stopping at absorbing nodes.
fn reached(graph: &CompGraph, start: NodeId, stop: &BTreeSet<NodeId>) -> Vec<bool> {
    let mut seen = vec![false; graph.len()];
    let mut stack = vec![start];
    while let Some(v) = stack.pop() {
        if std::mem::replace(&mut seen[v], true) {
            continue;
        }
        if !absorbs(graph, stop, v) {
            stack.extend(graph.node(v).inputs.iter().copied());
        }
    }
    seen
}

/// Nodes whose output bounds a propagation from `start` consumes: inputs of
/// crossed ReLUs (including stopped ReLUs) and squared distances, hinge
/// outputs, other stop nodes and the graph input.
pub fn required_bounds(graph: &CompGraph, start: NodeId, stop: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    let seen = reached(graph, start, stop);
    let mut need = BTreeSet::new();
    for v in (0..graph.len()).filter(|&v| seen[v]) {
        let node = graph.node(v);
        match &node.kind {
            NodeKind::Input => {
                need.insert(v);
            }
            NodeKind::Constant { .. } => {}
            NodeKind::Relu => {
                need.insert(node.inputs[0]);
            }
            NodeKind::SquaredDistance { .. } if !stop.contains(&v) => {
                need.insert(node.inputs[0]);
            }
            _ if absorbs(graph, stop, v) => {
                need.insert(v);
            }
            _ => {}
        }
    }
    need
}

fn accumulate(slot: &mut Option<Matrix>, m: Matrix) {
    match slot {
        None => *slot = Some(m),
        Some(acc) => {
            for (a, b) in acc.data_mut().iter_mut().zip(m.data()) {
                *a += b;
            }
        }
    }
}

/// Splits each coefficient by sign: positive entries take the lower
/// relaxation, negative entries the upper one.
fn relax_backward(
    a: &Matrix,
    l: &[f64],
    u: &[f64],
    alpha: AlphaPolicy,
    offset: &mut [f64],
) -> Result<Matrix> {
    let rel = relax_relu(l, u, alpha)?;
    let mut out = Matrix::zeros(a.rows(), a.cols());
    for r in 0..a.rows() {
        let row = out.row_mut(r);
        for (j, &c) in a.row(r).iter().enumerate() {
            if c >= 0.0 {
                row[j] = c * rel.lower_slope[j];
                offset[r] += c * rel.lower_offset[j];
            } else {
                row[j] = c * rel.upper_slope[j];
                offset[r] += c * rel.upper_offset[j];
            }
        }
    }
    Ok(out)
}

/// Linear bounds on `sum_j w_j (x_j - t_j)^2` scaled by each row's coefficient:
/// tangent planes for positive coefficients, chords for negative ones.
fn squared_distance_backward(
    a: &Matrix,
    target: &[f64],
    weights: &[f64],
    l: &[f64],
    u: &[f64],
    offset: &mut [f64],
) -> Matrix {
    let n = target.len();
    let mut out = Matrix::zeros(a.rows(), n);
    for r in 0..a.rows() {
        let c = a.get(r, 0);
        let row = out.row_mut(r);
        for j in 0..n {
            let (w, t) = (weights[j], target[j]);
            let (slope, intercept) = if c >= 0.0 {
                let x0 = t.clamp(l[j], u[j]);
                let s = 2.0 * w * (x0 - t);
                (s, w * (x0 - t) * (x0 - t) - s * x0)
            } else if l[j] == u[j] {
                (0.0, w * (l[j] - t) * (l[j] - t))
            } else {
                let s = w * (u[j] + l[j] - 2.0 * t);
                (s, w * (l[j] - t) * (l[j] - t) - s * l[j])
            };
            row[j] = c * slope;
            offset[r] += c * intercept;
        }
    }
    out
}

/// Propagates `coeffs * g_start(u)` backwards to the frontier: the graph input,
/// constants (folded into the offset), stop nodes and penalty hinges (bounded
/// by their recorded output bounds). A stopped ReLU is relaxed once more and
/// anchors at its pre-activation.
///
/// Each node is expanded once, after every consumer that receives flow has
/// pushed its coefficients into it.
pub fn backward_propagate(
    graph: &CompGraph,
    start: NodeId,
    coeffs: Matrix,
    stop: &BTreeSet<NodeId>,
    preact: &PreactBounds,
    alpha: AlphaPolicy,
) -> Result<LinearBounds> {
    if coeffs.cols() != graph.node(start).dim {
        return Err(Error::ShapeMismatch(format!(
            "{} coefficients for node {start} of dim {}",
            coeffs.cols(),
            graph.node(start).dim
        )));
    }
    let rows = coeffs.rows();
    let seen = reached(graph, start, stop);
    let mut pending = vec![0usize; graph.len()];
    for v in (0..graph.len()).filter(|&v| seen[v] && !absorbs(graph, stop, v)) {
        for &w in &graph.node(v).inputs {
            pending[w] += 1;
        }
    }

    let mut flow: Vec<Option<Matrix>> = vec![None; graph.len()];
    let mut anchors: BTreeMap<NodeId, Matrix> = BTreeMap::new();
    let mut offset = vec![0.0; rows];
    flow[start] = Some(coeffs);
    let mut queue = VecDeque::from([start]);

    while let Some(v) = queue.pop_front() {
        let node = graph.node(v);
        let a = flow[v].take();
        if absorbs(graph, stop, v) {
            let Some(a) = a else { continue };
            match &node.kind {
                NodeKind::Constant { value } => {
                    for (r, off) in offset.iter_mut().enumerate() {
                        *off += a.row(r).iter().zip(value).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
                NodeKind::Relu if stop.contains(&v) => {
                    let w = node.inputs[0];
                    let b = preact.require(w)?;
                    let m = relax_backward(&a, &b.lower, &b.upper, alpha, &mut offset)?;
                    let mut slot = anchors.remove(&w);
                    accumulate(&mut slot, m);
                    anchors.insert(w, slot.expect("accumulated"));
                }
                NodeKind::PenaltyHinge { .. } if !stop.contains(&v) => {
                    let b = preact.require(v)?;
                    for (r, off) in offset.iter_mut().enumerate() {
                        for ((&c, &l), &u) in a.row(r).iter().zip(&b.lower).zip(&b.upper) {
                            *off += (c * l).min(c * u);
                        }
                    }
                }
                _ => {
                    let mut slot = anchors.remove(&v);
                    accumulate(&mut slot, a);
                    anchors.insert(v, slot.expect("accumulated"));
                }
            }
            continue;
        }

        if let Some(a) = a {
            match &node.kind {
                NodeKind::Linear { weight, bias } => {
                    for (r, off) in offset.iter_mut().enumerate() {
                        *off += a.row(r).iter().zip(bias).map(|(x, y)| x * y).sum::<f64>();
                    }
                    let mut m = Matrix::zeros(rows, weight.cols());
                    a.matmul_acc(weight, &mut m);
                    accumulate(&mut flow[node.inputs[0]], m);
                }
                NodeKind::Relu => {
                    let w = node.inputs[0];
                    let b = preact.require(w)?;
                    let m = relax_backward(&a, &b.lower, &b.upper, alpha, &mut offset)?;
                    accumulate(&mut flow[w], m);
                }
                NodeKind::Sum => {
                    for &w in &node.inputs {
                        accumulate(&mut flow[w], a.clone());
                    }
                }
                NodeKind::ScalarAffine { scale, shift } => {
                    let mut m = a.clone();
                    for (r, off) in offset.iter_mut().enumerate() {
                        *off += shift * a.row(r).iter().sum::<f64>();
                    }
                    m.data_mut().iter_mut().for_each(|x| *x *= scale);
                    accumulate(&mut flow[node.inputs[0]], m);
                }
                NodeKind::SquaredDistance { target, weights } => {
                    let w = node.inputs[0];
                    let b = preact.require(w)?;
                    let m = squared_distance_backward(
                        &a, target, weights, &b.lower, &b.upper, &mut offset,
                    );
                    accumulate(&mut flow[w], m);
                }
                NodeKind::Concat => {
                    let mut col = 0;
                    for &w in &node.inputs {
                        let dw = graph.node(w).dim;
                        let mut m = Matrix::zeros(rows, dw);
                        for r in 0..rows {
                            m.row_mut(r).copy_from_slice(&a.row(r)[col..col + dw]);
                        }
                        accumulate(&mut flow[w], m);
                        col += dw;
                    }
                }
                NodeKind::Slice { start: s, len } => {
                    let w = node.inputs[0];
                    let mut m = Matrix::zeros(rows, graph.node(w).dim);
                    for r in 0..rows {
                        m.row_mut(r)[*s..s + len].copy_from_slice(a.row(r));
                    }
                    accumulate(&mut flow[w], m);
                }
                NodeKind::Input | NodeKind::Constant { .. } | NodeKind::PenaltyHinge { .. } => {
                    unreachable!("absorbing kinds are handled above")
                }
            }
        }
        for &w in &node.inputs {
            pending[w] -= 1;
            if pending[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    Ok(LinearBounds { offset, anchors })
}

/// Minimum of each row of `lb` over the anchors' boxes: with `c` the box
/// center and `e` its half-widths, `offset + A c - |A| e`.
pub fn concretize(lb: &LinearBounds, bounds: &PreactBounds) -> Result<Vec<f64>> {
    let mut out = lb.offset.clone();
    for (&node, a) in &lb.anchors {
        let b = bounds.require(node)?;
        if b.lower.len() != a.cols() {
            return Err(Error::ShapeMismatch(format!(
                "anchor {node} has {} coefficients but {} bounds",
                a.cols(),
                b.lower.len()
            )));
        }
        for (r, lf) in out.iter_mut().enumerate() {
            for ((&c, &l), &u) in a.row(r).iter().zip(&b.lower).zip(&b.upper) {
                let center = 0.5 * (l + u);
                let radius = 0.5 * (u - l);
                *lf += c * center - c.abs() * radius;
            }
        }
    }
    if let Some(bad) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("concretized bound row {bad}")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crown::Provenance;
    use crate::graph::GraphBuilder;

    fn input_bounds(g: &CompGraph, lo: &[f64], hi: &[f64]) -> PreactBounds {
        let mut p = PreactBounds::new();
        p.insert(g.input(), lo.to_vec(), hi.to_vec(), Provenance::Interval).unwrap();
        p
    }

    #[test]
    fn linear_chain_composes_exactly() {
        let mut b = GraphBuilder::new();
        let x = b.input(2).unwrap();
        let w1 = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]).unwrap();
        let l1 = b.linear(x, w1.clone(), vec![0.5, -1.0]).unwrap();
        let w2 = Matrix::from_rows(&[vec![3.0, -2.0]]).unwrap();
        let l2 = b.linear(l1, w2.clone(), vec![0.25]).unwrap();
        let g = b.build(l2).unwrap();
        let lb = backward_propagate(
            &g,
            l2,
            Matrix::identity(1),
            &BTreeSet::new(),
            &PreactBounds::new(),
            AlphaPolicy::Adaptive,
        )
        .unwrap();
        assert_eq!(lb.anchors[&x], w2.matmul(&w1).unwrap());
        assert_eq!(lb.offset, vec![3.0 * 0.5 - -2.0 + 0.25]);
    }

    #[test]
    fn stopped_relu_anchors_at_its_preactivation() {
        let mut b = GraphBuilder::new();
        let x = b.input(1).unwrap();
        let z = b.linear(x, Matrix::identity(1), vec![0.0]).unwrap();
        let r = b.relu(z).unwrap();
        let o = b.linear(r, Matrix::new(1, 1, vec![2.0]).unwrap(), vec![0.0]).unwrap();
        let g = b.build(o).unwrap();
        let stop = BTreeSet::from([r]);
        let mut p = input_bounds(&g, &[-1.0], &[3.0]);
        p.insert(z, vec![-1.0], vec![3.0], Provenance::Interval).unwrap();
        let lb =
            backward_propagate(&g, o, Matrix::identity(1), &stop, &p, AlphaPolicy::Adaptive).unwrap();
        assert_eq!(lb.anchors.keys().copied().collect::<Vec<_>>(), vec![z]);
        assert_eq!(required_bounds(&g, o, &stop), BTreeSet::from([z]));
        assert_eq!(concretize(&lb, &p).unwrap(), vec![-2.0]);
    }

    #[test]
    fn missing_preact_is_an_error() {
        let mut b = GraphBuilder::new();
        let x = b.input(1).unwrap();
        let r = b.relu(x).unwrap();
        let g = b.build(r).unwrap();
        let err = backward_propagate(
            &g,
            r,
            Matrix::identity(1),
            &BTreeSet::new(),
            &PreactBounds::new(),
            AlphaPolicy::Adaptive,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingBounds(id) if id == x));
    }

    #[test]
    fn concretize_linear_examples() {
        // f(u) = 2u - 1 on [-1, 1].
        let lb = LinearBounds {
            offset: vec![-1.0],
            anchors: BTreeMap::from([(0, Matrix::new(1, 1, vec![2.0]).unwrap())]),
        };
        let mut p = PreactBounds::new();
        p.insert(0, vec![-1.0], vec![1.0], Provenance::Interval).unwrap();
        assert_eq!(concretize(&lb, &p).unwrap(), vec![-3.0]);
        // f(u) = u1 - u2 on [0, 1]^2.
        let lb = LinearBounds {
            offset: vec![0.0],
            anchors: BTreeMap::from([(0, Matrix::new(1, 2, vec![1.0, -1.0]).unwrap())]),
        };
        let mut p = PreactBounds::new();
        p.insert(0, vec![0.0, 0.0], vec![1.0, 1.0], Provenance::Interval).unwrap();
        assert_eq!(concretize(&lb, &p).unwrap(), vec![-1.0]);
    }

    #[test]
    fn squared_distance_tangent_and_chord() {
        let mut off = vec![0.0, 0.0];
        let a = Matrix::new(2, 1, vec![1.0, -1.0]).unwrap();
        let m = squared_distance_backward(&a, &[0.0], &[1.0], &[1.0], &[3.0], &mut off);
        // Tangent at x0 = 1: 2x - 1. Chord of x^2 through 1 and 3: 4x - 3.
        assert_eq!((m.get(0, 0), off[0]), (2.0, -1.0));
        assert_eq!((m.get(1, 0), off[1]), (-4.0, 3.0));
    }
}
