use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{CompGraph, NodeId, NodeKind};
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Samples per evaluation chunk; chunks are evaluated independently.
const CHUNK: usize = 256;

/// Elementwise min/max of a node's output over a set of samples.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeRecord {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub samples: usize,
}

/// Per-node empirical ranges accumulated while evaluating samples.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActivationRanges {
    records: BTreeMap<NodeId, RangeRecord>,
}

impl ActivationRanges {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, node: NodeId) -> Option<&RangeRecord> {
        self.records.get(&node)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &RangeRecord)> {
        self.records.iter().map(|(k, v)| (*k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Folds `n` rows of `dim` values into the record for `node`.
    pub fn observe(&mut self, node: NodeId, values: &[f64], dim: usize) {
        if dim == 0 || values.is_empty() {
            return;
        }
        let n = values.len() / dim;
        let rec = self.records.entry(node).or_insert_with(|| RangeRecord {
            lower: vec![f64::INFINITY; dim],
            upper: vec![f64::NEG_INFINITY; dim],
            samples: 0,
        });
        for row in values.chunks_exact(dim) {
            for ((lo, hi), &v) in rec.lower.iter_mut().zip(rec.upper.iter_mut()).zip(row) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        rec.samples += n;
    }

    pub fn merge(&mut self, other: &ActivationRanges) {
        for (&node, rec) in &other.records {
            match self.records.get_mut(&node) {
                None => {
                    self.records.insert(node, rec.clone());
                }
                Some(mine) => {
                    for (a, b) in mine.lower.iter_mut().zip(&rec.lower) {
                        *a = a.min(*b);
                    }
                    for (a, b) in mine.upper.iter_mut().zip(&rec.upper) {
                        *a = a.max(*b);
                    }
                    mine.samples += rec.samples;
                }
            }
        }
    }

    /// Overrides a record; used by tests and the audit's negative control.
    pub fn insert(&mut self, node: NodeId, record: RangeRecord) {
        self.records.insert(node, record);
    }
}

impl CompGraph {
    fn check_batch(&self, batch: &[f64]) -> Result<usize> {
        let d = self.input_dim();
        if d == 0 || !batch.len().is_multiple_of(d) {
            return Err(Error::ShapeMismatch(format!(
                "batch of {} values is not a multiple of input dim {d}",
                batch.len()
            )));
        }
        if batch.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input batch".into()));
        }
        Ok(batch.len() / d)
    }

    /// Objective values for `n` row-major samples of dimension `input_dim`.
    pub fn evaluate(&self, batch: &[f64]) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        let d = self.input_dim();
        let parts: Vec<Result<Vec<f64>>> = batch
            .par_chunks(CHUNK * d)
            .map(|chunk| self.forward_chunk(chunk, &[]).map(|(out, _)| out))
            .collect();
        let mut out = Vec::with_capacity(batch.len() / d);
        for p in parts {
            out.extend(p?);
        }
        Ok(out)
    }

    /// Objective values plus the per-sample outputs (`n x dim`, row-major) of
    /// every node in `watch`.
    pub fn evaluate_watch(
        &self,
        batch: &[f64],
        watch: &[NodeId],
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        self.check_batch(batch)?;
        self.check_watch(watch)?;
        self.forward_chunk(batch, watch)
    }

    /// Objective values, folding watched-node outputs into `ranges`.
    pub fn evaluate_recording(
        &self,
        batch: &[f64],
        watch: &[NodeId],
        ranges: &mut ActivationRanges,
    ) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        self.check_watch(watch)?;
        let d = self.input_dim();
        let parts: Vec<Result<(Vec<f64>, ActivationRanges)>> = batch
            .par_chunks(CHUNK * d)
            .map(|chunk| {
                let (out, watched) = self.forward_chunk(chunk, watch)?;
                let mut local = ActivationRanges::new();
                for (&node, vals) in watch.iter().zip(&watched) {
                    local.observe(node, vals, self.node(node).dim);
                }
                Ok((out, local))
            })
            .collect();
        let mut out = Vec::with_capacity(batch.len() / d);
        for p in parts {
            let (o, local) = p?;
            out.extend(o);
            ranges.merge(&local);
        }
        Ok(out)
    }

    fn check_watch(&self, watch: &[NodeId]) -> Result<()> {
        match watch.iter().find(|&&w| w >= self.len()) {
            Some(&w) => Err(Error::InvalidGraph(format!("watched node {w} does not exist"))),
            None => Ok(()),
        }
    }

    fn forward_chunk(&self, batch: &[f64], watch: &[NodeId]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let n = batch.len() / self.input_dim();
        let values = self.forward_all(batch, n)?;
        let out = values[self.output()].clone();
        let watched = watch.iter().map(|&w| values[w].clone()).collect();
        Ok((out, watched))
    }

    /// Outputs of every node, each stored as `n x dim` row-major.
    pub(crate) fn forward_all(&self, batch: &[f64], n: usize) -> Result<Vec<Vec<f64>>> {
        let mut values: Vec<Vec<f64>> = Vec::with_capacity(self.len());
        for node in self.nodes() {
            let v = forward_node(&node.kind, &node.inputs, node.dim, &values, batch, n);
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("output of node {} ({})", node.id, node.kind.name())));
            }
            values.push(v);
        }
        Ok(values)
    }

    /// Objective value and gradient at a single point. ReLU kinks get
    /// subgradient 0, as does the hinge at the obstacle centre.
    pub fn gradient(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        if u.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "point of dim {} for graph input dim {}",
                u.len(),
                self.input_dim()
            )));
        }
        let values = self.forward_all(u, 1)?;
        let mut adj: Vec<Vec<f64>> = self.nodes().iter().map(|n| vec![0.0; n.dim]).collect();
        adj[self.output()][0] = 1.0;
        for node in self.nodes().iter().rev() {
            let g = std::mem::take(&mut adj[node.id]);
            if g.iter().all(|&v| v == 0.0) {
                adj[node.id] = g;
                continue;
            }
            match &node.kind {
                NodeKind::Input | NodeKind::Constant { .. } => {}
                NodeKind::Linear { weight, .. } => {
                    let dst = &mut adj[node.inputs[0]];
                    for (r, &gr) in g.iter().enumerate() {
                        for (d, &w) in dst.iter_mut().zip(weight.row(r)) {
                            *d += gr * w;
                        }
                    }
                }
                NodeKind::Relu => {
                    let z = &values[node.inputs[0]];
                    let dst = &mut adj[node.inputs[0]];
                    for ((d, &gr), &zj) in dst.iter_mut().zip(&g).zip(z) {
                        if zj > 0.0 {
                            *d += gr;
                        }
                    }
                }
                NodeKind::Sum => {
                    for &w in &node.inputs {
                        for (d, &gr) in adj[w].iter_mut().zip(&g) {
                            *d += gr;
                        }
                    }
                }
                NodeKind::ScalarAffine { scale, .. } => {
                    for (d, &gr) in adj[node.inputs[0]].iter_mut().zip(&g) {
                        *d += scale * gr;
                    }
                }
                NodeKind::SquaredDistance { target, weights } => {
                    let x = &values[node.inputs[0]];
                    let dst = &mut adj[node.inputs[0]];
                    for j in 0..x.len() {
                        dst[j] += g[0] * 2.0 * weights[j] * (x[j] - target[j]);
                    }
                }
                NodeKind::PenaltyHinge { center, size, scale } => {
                    let k = center.len();
                    let x = &values[node.inputs[0]];
                    let dst = &mut adj[node.inputs[0]];
                    for (p, &gp) in g.iter().enumerate() {
                        let pt = &x[p * k..(p + 1) * k];
                        let dist = pt.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                        if size - dist > 0.0 && dist > 0.0 {
                            for j in 0..k {
                                dst[p * k + j] -= gp * scale * (pt[j] - center[j]) / dist;
                            }
                        }
                    }
                }
                NodeKind::Concat => {
                    let mut off = 0;
                    for &w in &node.inputs {
                        let dw = self.node(w).dim;
                        for (d, &gr) in adj[w].iter_mut().zip(&g[off..off + dw]) {
                            *d += gr;
                        }
                        off += dw;
                    }
                }
                NodeKind::Slice { start, len } => {
                    let dst = &mut adj[node.inputs[0]][*start..start + len];
                    for (d, &gr) in dst.iter_mut().zip(&g) {
                        *d += gr;
                    }
                }
            }
            adj[node.id] = g;
        }
        Ok((values[self.output()][0], adj[self.input()].clone()))
    }
}

fn forward_node(
    kind: &NodeKind,
    inputs: &[NodeId],
    dim: usize,
    values: &[Vec<f64>],
    batch: &[f64],
    n: usize,
) -> Vec<f64> {
    match kind {
        NodeKind::Input => batch.to_vec(),
        NodeKind::Constant { value } => value.repeat(n),
        NodeKind::Linear { weight, bias } => {
            let x = &values[inputs[0]];
            let din = weight.cols();
            let mut out = Vec::with_capacity(n * dim);
            for row in x.chunks_exact(din) {
                for (r, b) in bias.iter().enumerate() {
                    out.push(dot(weight.row(r), row) + b);
                }
            }
            out
        }
        NodeKind::Relu => values[inputs[0]].iter().map(|&z| z.max(0.0)).collect(),
        NodeKind::Sum => {
            let mut out = values[inputs[0]].clone();
            for &w in &inputs[1..] {
                for (o, v) in out.iter_mut().zip(&values[w]) {
                    *o += v;
                }
            }
            out
        }
        NodeKind::ScalarAffine { scale, shift } => {
            values[inputs[0]].iter().map(|&x| scale * x + shift).collect()
        }
        NodeKind::SquaredDistance { target, weights } => values[inputs[0]]
            .chunks_exact(target.len())
            .map(|row| {
                row.iter()
                    .zip(target)
                    .zip(weights)
                    .map(|((x, t), w)| w * (x - t) * (x - t))
                    .sum()
            })
            .collect(),
        NodeKind::PenaltyHinge { center, size, scale } => values[inputs[0]]
            .chunks_exact(center.len())
            .map(|pt| {
                let dist = pt.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                scale * (size - dist).max(0.0)
            })
            .collect(),
        NodeKind::Concat => {
            let mut out = Vec::with_capacity(n * dim);
            let dims: Vec<usize> =
                inputs.iter().map(|&w| values[w].len() / n.max(1)).collect();
            for s in 0..n {
                for (&w, &dw) in inputs.iter().zip(&dims) {
                    out.extend_from_slice(&values[w][s * dw..(s + 1) * dw]);
                }
            }
            out
        }
        NodeKind::Slice { start, len } => {
            let x = &values[inputs[0]];
            let din = x.len() / n.max(1);
            let mut out = Vec::with_capacity(n * len);
            for row in x.chunks_exact(din) {
                out.extend_from_slice(&row[*start..start + len]);
            }
            out
        }
    }
}
