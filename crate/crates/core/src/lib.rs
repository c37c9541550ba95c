//! Branch-and-bound trajectory optimization over ReLU-MLP dynamics models.
//!
//! The objective `f(u)` over a flattened action sequence is a [`graph::CompGraph`].
//! [`bab::plan`] alternates sampling-based search ([`search`]) with linear lower
//! bounds ([`crown`]) over a pool of boxes, splitting promising boxes and
//! pruning boxes whose lower bound exceeds the best objective found.

pub mod audit;
pub mod bab;
pub mod baselines;
pub mod crown;
pub mod domain;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod model_io;
pub mod objective;
pub mod search;

pub use domain::BoxDomain;
pub use error::{Error, Result};
pub use graph::{CompGraph, GraphBuilder, NodeId, NodeKind};
pub use linalg::Matrix;
pub use objective::Objective;
