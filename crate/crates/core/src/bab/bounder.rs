//! Lower-bound providers for the branch-and-bound loop.

use std::collections::BTreeSet;

use crate::crown::{self, BoundOutcome, BoundingMode, CrownConfig};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::graph::{ActivationRanges, CompGraph, NodeId};
use crate::model_io::SyntheticObjective;

pub trait Bounder: Sync {
    /// Nodes whose sample ranges the bounder consumes; empty if none.
    fn watch(&self) -> &[NodeId];

    fn bound(&self, domain: &BoxDomain, ranges: &ActivationRanges) -> Result<BoundOutcome>;
}

/// Linear bound propagation over a graph objective.
pub struct GraphBounder<'a> {
    graph: &'a CompGraph,
    config: CrownConfig,
    watch: Vec<NodeId>,
}

impl<'a> GraphBounder<'a> {
    pub fn new(graph: &'a CompGraph, config: CrownConfig) -> Result<Self> {
        let stop: BTreeSet<NodeId> = crown::resolve_stop_set(graph, &config.stop)?;
        let watch = match config.mode {
            BoundingMode::EarlyStopEmpirical => crown::watch_nodes(graph, &stop),
            _ => Vec::new(),
        };
        Ok(Self { graph, config, watch })
    }
}

impl Bounder for GraphBounder<'_> {
    fn watch(&self) -> &[NodeId] {
        &self.watch
    }

    fn bound(&self, domain: &BoxDomain, ranges: &ActivationRanges) -> Result<BoundOutcome> {
        crown::lower_bound(self.graph, domain, &self.config, Some(ranges))
    }
}

/// Exact per-box minimum of the separable synthetic objective.
pub struct SeparableBounder {
    dim: usize,
}

impl SeparableBounder {
    pub fn new(objective: &SyntheticObjective) -> Self {
        use crate::objective::Objective;
        Self { dim: objective.dim() }
    }
}

impl Bounder for SeparableBounder {
    fn watch(&self) -> &[NodeId] {
        &[]
    }

    fn bound(&self, domain: &BoxDomain, _: &ActivationRanges) -> Result<BoundOutcome> {
        if domain.dim() != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "box of dim {} for synthetic objective of dim {}",
                domain.dim(),
                self.dim
            )));
        }
        let lf = (0..self.dim)
            .map(|j| SyntheticObjective::term_min(domain.lower()[j], domain.upper()[j]))
            .sum();
        Ok(BoundOutcome { lf, sound: true })
    }
}
