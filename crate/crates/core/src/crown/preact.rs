use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::NodeId;

/// Where a node's bounds came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// Sound interval arithmetic over the box.
    Interval,
    /// Sound backward propagation to the input box.
    Crown,
    /// Min/max over evaluated samples; not sound for the whole box.
    Empirical { samples: usize },
}

impl Provenance {
    pub fn is_sound(&self) -> bool {
        !matches!(self, Provenance::Empirical { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub provenance: Provenance,
}

/// Output bounds for the nodes a propagation needs to relax or concretize at.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PreactBounds {
    entries: BTreeMap<NodeId, NodeBounds>,
}

impl PreactBounds {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        node: NodeId,
        lower: Vec<f64>,
        upper: Vec<f64>,
        provenance: Provenance,
    ) -> Result<()> {
        if lower.len() != upper.len() {
            return Err(Error::ShapeMismatch(format!(
                "bounds for node {node} have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (index, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::NonFinite(format!("bounds of node {node}")));
            }
            if l > u {
                return Err(Error::InvertedBounds { index, lower: l, upper: u });
            }
        }
        self.entries.insert(node, NodeBounds { lower, upper, provenance });
        Ok(())
    }

    pub fn get(&self, node: NodeId) -> Option<&NodeBounds> {
        self.entries.get(&node)
    }

    pub fn require(&self, node: NodeId) -> Result<&NodeBounds> {
        self.get(node).ok_or(Error::MissingBounds(node))
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.entries.contains_key(&node)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &NodeBounds)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    /// True when every entry is sound.
    pub fn is_sound(&self) -> bool {
        self.entries.values().all(|b| b.provenance.is_sound())
    }
}
