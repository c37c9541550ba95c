//! Classical planners over the dynamics model: a goal-biased random tree and
//! a probabilistic roadmap searched with A*.
//!
//! Both report paths as action sequences together with the states obtained by
//! replaying those actions through the model, so every edge is consistent
//! with the dynamics. A state collides when any obstacle hinge of the
//! scenario's cost is positive.

mod prm;
mod rrt;

use serde::Serialize;

pub use prm::{astar, prm_build, prm_plan, PrmConfig, Roadmap};
pub use rrt::{rrt_plan, RrtConfig};

use crate::error::Result;
use crate::model_io::{Scenario, StepModel};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselinePath {
    /// Object states `x_0..x_n`, starting at the initial state.
    pub states: Vec<Vec<f64>>,
    /// Effector positions `p_0..p_n`.
    pub effectors: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    /// A non-empty path was found (and, for the tree, it reached the goal).
    pub success: bool,
    /// The last state lies within the goal threshold.
    pub reached_goal: bool,
    /// Step cost of the last state, weighted as step `H`.
    pub final_step_cost: f64,
    /// Tree nodes or roadmap nodes considered.
    pub nodes: usize,
}

impl BaselinePath {
    pub fn flat_actions(&self) -> Vec<f64> {
        self.actions.concat()
    }
}

/// Rolls `actions` out from the scenario's initial state and packages the
/// result.
pub(crate) fn replay_path(
    step: &StepModel<'_>,
    scenario: &Scenario,
    actions: Vec<Vec<f64>>,
    success: bool,
    threshold: f64,
    nodes: usize,
) -> Result<BaselinePath> {
    let (xs, ps) = step.rollout(&scenario.initial_state, &scenario.initial_effector, &actions.concat())?;
    let mut states = vec![scenario.initial_state.clone()];
    states.extend(xs);
    let mut effectors = vec![scenario.initial_effector.clone()];
    effectors.extend(ps);
    let (x, p) = (states.last().unwrap(), effectors.last().unwrap());
    let reached_goal = crate::linalg::distance(x, &scenario.target_state) <= threshold;
    Ok(BaselinePath {
        final_step_cost: scenario.step_cost(scenario.horizon, x, p),
        states,
        effectors,
        actions,
        success,
        reached_goal,
        nodes,
    })
}
