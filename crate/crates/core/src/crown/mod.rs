//! Linear lower bounds for graph objectives over boxes.
//!
//! ReLUs are replaced by their linear relaxations and the coefficients of
//! the output are pushed backwards through the graph until they reach the
//! input box or a chosen stop set, where they are concretized.

mod bound;
mod preact;
mod propagate;
mod relax;

pub use bound::{
    bound_with, crown_preact, empirical_preact, interval_preact, lower_bound, resolve_stop_set,
    watch_nodes, BoundOutcome, BoundingMode, CrownConfig, StopRule,
};
pub use preact::{NodeBounds, PreactBounds, Provenance};
pub use propagate::{backward_propagate, concretize, required_bounds, LinearBounds};
pub use relax::{relax_relu, AlphaPolicy, NeuronCase, ReluRelaxation};
