//! Computational graph of a planning objective `f(u)`.
//!
//! Nodes are appended through [`GraphBuilder`] and may only reference nodes
//! created before them, so insertion order is a topological order and the graph
//! is acyclic by construction. Every graph has exactly one `Input` node (the
//! flattened action sequence) and one scalar output node.

mod eval;
mod interval;

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::linalg::{ensure_finite, Matrix};

pub use eval::{ActivationRanges, RangeRecord};
pub use interval::{hinge_interval, squared_distance_interval, Interval};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq)]
pub enum NodeKind {
    Input,
    Constant { value: Vec<f64> },
    /// `W x + b`.
    Linear { weight: Matrix, bias: Vec<f64> },
    Relu,
    /// Elementwise sum of inputs sharing one dimension.
    Sum,
    /// Elementwise `scale * x + shift`.
    ScalarAffine { scale: f64, shift: f64 },
    /// Scalar `sum_j w_j (x_j - t_j)^2`.
    SquaredDistance { target: Vec<f64>, weights: Vec<f64> },
    /// Input is a stack of points of dimension `center.len()`; output holds one
    /// value per point, `scale * relu(size - |x_k - center|)`.
    PenaltyHinge { center: Vec<f64>, size: f64, scale: f64 },
    Concat,
    Slice { start: usize, len: usize },
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Input => "Input",
            NodeKind::Constant { .. } => "Constant",
            NodeKind::Linear { .. } => "Linear",
            NodeKind::Relu => "ReLU",
            NodeKind::Sum => "Sum",
            NodeKind::ScalarAffine { .. } => "ScalarAffine",
            NodeKind::SquaredDistance { .. } => "SquaredDistance",
            NodeKind::PenaltyHinge { .. } => "PenaltyHinge",
            NodeKind::Concat => "Concat",
            NodeKind::Slice { .. } => "Slice",
        }
    }

    /// Nodes without operands: the input set of the graph.
    pub fn is_leaf(&self) -> bool {
        matches!(self, NodeKind::Input | NodeKind::Constant { .. })
    }
}

#[derive(Clone, Debug)]
pub struct GraphNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub inputs: Vec<NodeId>,
    /// Output dimension.
    pub dim: usize,
    pub label: Option<String>,
}

#[derive(Clone, Debug)]
pub struct CompGraph {
    nodes: Vec<GraphNode>,
    consumers: Vec<Vec<NodeId>>,
    input: NodeId,
    output: NodeId,
}

impl CompGraph {
    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &GraphNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&self) -> NodeId {
        self.input
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.nodes[self.input].dim
    }

    /// Nodes consuming `id`, one entry per edge.
    pub fn consumers(&self, id: NodeId) -> &[NodeId] {
        &self.consumers[id]
    }

    /// Node ids in topological order.
    pub fn topological_order(&self) -> impl Iterator<Item = NodeId> + '_ {
        0..self.nodes.len()
    }

    pub fn find_label(&self, label: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.label.as_deref() == Some(label)).map(|n| n.id)
    }

    pub fn nodes_with_label_prefix(&self, prefix: &str) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.label.as_deref().is_some_and(|l| l.starts_with(prefix)))
            .map(|n| n.id)
            .collect()
    }

    pub fn nodes_of_kind(&self, pred: impl Fn(&NodeKind) -> bool) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| pred(&n.kind)).map(|n| n.id).collect()
    }

    /// All nodes `target` depends on, including itself.
    pub fn ancestors(&self, target: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![target];
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                stack.extend(self.nodes[v].inputs.iter().copied());
            }
        }
        seen
    }
}

#[derive(Default)]
pub struct GraphBuilder {
    nodes: Vec<GraphNode>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self, id: NodeId) -> usize {
        self.nodes[id].dim
    }

    fn push(&mut self, kind: NodeKind, inputs: Vec<NodeId>, dim: usize) -> Result<NodeId> {
        let id = self.nodes.len();
        if let Some(&bad) = inputs.iter().find(|&&w| w >= id) {
            return Err(Error::InvalidGraph(format!("node {id} references unknown node {bad}")));
        }
        self.nodes.push(GraphNode { id, kind, inputs, dim, label: None });
        Ok(id)
    }

    fn check_input(&self, x: NodeId) -> Result<usize> {
        self.nodes
            .get(x)
            .map(|n| n.dim)
            .ok_or_else(|| Error::InvalidGraph(format!("unknown node {x}")))
    }

    pub fn input(&mut self, dim: usize) -> Result<NodeId> {
        if self.nodes.iter().any(|n| n.kind == NodeKind::Input) {
            return Err(Error::InvalidGraph("graph already has an input node".into()));
        }
        self.push(NodeKind::Input, vec![], dim)
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Result<NodeId> {
        ensure_finite(&value, "constant node")?;
        let dim = value.len();
        self.push(NodeKind::Constant { value }, vec![], dim)
    }

    pub fn linear(&mut self, x: NodeId, weight: Matrix, bias: Vec<f64>) -> Result<NodeId> {
        let din = self.check_input(x)?;
        if weight.cols() != din || bias.len() != weight.rows() {
            return Err(Error::ShapeMismatch(format!(
                "linear node: weight {}x{}, bias {}, input dim {din}",
                weight.rows(),
                weight.cols(),
                bias.len()
            )));
        }
        if !weight.is_finite() {
            return Err(Error::NonFinite("linear weight".into()));
        }
        ensure_finite(&bias, "linear bias")?;
        let dim = weight.rows();
        self.push(NodeKind::Linear { weight, bias }, vec![x], dim)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let dim = self.check_input(x)?;
        self.push(NodeKind::Relu, vec![x], dim)
    }

    pub fn sum(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        let dims = xs.iter().map(|&x| self.check_input(x)).collect::<Result<Vec<_>>>()?;
        match dims.first() {
            None => Err(Error::InvalidGraph("sum of no operands".into())),
            Some(&d) if dims.iter().all(|&e| e == d) => self.push(NodeKind::Sum, xs.to_vec(), d),
            Some(_) => Err(Error::ShapeMismatch(format!("sum operands have dims {dims:?}"))),
        }
    }

    pub fn scalar_affine(&mut self, x: NodeId, scale: f64, shift: f64) -> Result<NodeId> {
        let dim = self.check_input(x)?;
        ensure_finite(&[scale, shift], "scalar affine")?;
        self.push(NodeKind::ScalarAffine { scale, shift }, vec![x], dim)
    }

    pub fn squared_distance(
        &mut self,
        x: NodeId,
        target: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<NodeId> {
        let din = self.check_input(x)?;
        if target.len() != din || weights.len() != din {
            return Err(Error::ShapeMismatch(format!(
                "squared distance: input {din}, target {}, weights {}",
                target.len(),
                weights.len()
            )));
        }
        ensure_finite(&target, "squared distance target")?;
        ensure_finite(&weights, "squared distance weights")?;
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidGraph("squared distance weights must be >= 0".into()));
        }
        self.push(NodeKind::SquaredDistance { target, weights }, vec![x], 1)
    }

    pub fn penalty_hinge(
        &mut self,
        x: NodeId,
        center: Vec<f64>,
        size: f64,
        scale: f64,
    ) -> Result<NodeId> {
        let din = self.check_input(x)?;
        let k = center.len();
        if k == 0 || din % k != 0 {
            return Err(Error::ShapeMismatch(format!(
                "penalty hinge: input dim {din} is not a multiple of point dim {k}"
            )));
        }
        ensure_finite(&center, "hinge center")?;
        ensure_finite(&[size, scale], "hinge parameters")?;
        if scale < 0.0 {
            return Err(Error::InvalidGraph("hinge scale must be >= 0".into()));
        }
        self.push(NodeKind::PenaltyHinge { center, size, scale }, vec![x], din / k)
    }

    pub fn concat(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(Error::InvalidGraph("concat of no operands".into()));
        }
        let dim = xs.iter().map(|&x| self.check_input(x)).sum::<Result<usize>>()?;
        self.push(NodeKind::Concat, xs.to_vec(), dim)
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let din = self.check_input(x)?;
        if start + len > din {
            return Err(Error::ShapeMismatch(format!(
                "slice [{start}, {}) out of input dim {din}",
                start + len
            )));
        }
        self.push(NodeKind::Slice { start, len }, vec![x], len)
    }

    pub fn label(&mut self, id: NodeId, label: impl Into<String>) {
        self.nodes[id].label = Some(label.into());
    }

    pub fn build(self, output: NodeId) -> Result<CompGraph> {
        let inputs: Vec<_> =
            self.nodes.iter().filter(|n| n.kind == NodeKind::Input).map(|n| n.id).collect();
        let [input] = inputs[..] else {
            return Err(Error::InvalidGraph(format!(
                "expected exactly one input node, found {}",
                inputs.len()
            )));
        };
        let out = self
            .nodes
            .get(output)
            .ok_or_else(|| Error::InvalidGraph(format!("unknown output node {output}")))?;
        if out.dim != 1 {
            return Err(Error::InvalidGraph(format!(
                "output node must be scalar, has dim {}",
                out.dim
            )));
        }
        let mut consumers = vec![Vec::new(); self.nodes.len()];
        for n in &self.nodes {
            for &w in &n.inputs {
                consumers[w].push(n.id);
            }
        }
        Ok(CompGraph { nodes: self.nodes, consumers, input, output })
    }
}
