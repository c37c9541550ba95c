//! The minimal interface searchers and the branch-and-bound loop need from an
//! objective `f(u)`.

use crate::error::Result;
use crate::graph::{ActivationRanges, CompGraph, NodeId};

pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// `f` at each of the row-major samples in `batch`.
    fn evaluate_batch(&self, batch: &[f64]) -> Result<Vec<f64>>;

    /// Like [`Objective::evaluate_batch`], also folding the outputs of the
    /// watched nodes into `ranges`. Objectives without a graph ignore `watch`.
    fn evaluate_recording(
        &self,
        batch: &[f64],
        watch: &[NodeId],
        ranges: &mut ActivationRanges,
    ) -> Result<Vec<f64>> {
        let _ = (watch, ranges);
        self.evaluate_batch(batch)
    }

    /// Value and (sub)gradient at one point.
    fn gradient(&self, u: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl Objective for CompGraph {
    fn dim(&self) -> usize {
        self.input_dim()
    }

    fn evaluate_batch(&self, batch: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(batch)
    }

    fn evaluate_recording(
        &self,
        batch: &[f64],
        watch: &[NodeId],
        ranges: &mut ActivationRanges,
    ) -> Result<Vec<f64>> {
        CompGraph::evaluate_recording(self, batch, watch, ranges)
    }

    fn gradient(&self, u: &[f64]) -> Result<(f64, Vec<f64>)> {
        CompGraph::gradient(self, u)
    }
}
