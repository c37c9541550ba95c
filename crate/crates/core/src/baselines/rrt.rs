use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{replay_path, BaselinePath};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::linalg::distance;
use crate::model_io::{MlpModel, Scenario, StepModel};
use crate::search::uniform_point;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RrtConfig {
    pub max_iterations: usize,
    /// Actions sampled per expansion.
    pub candidates: usize,
    /// Probability of steering toward the goal instead of a random state.
    pub goal_bias: f64,
    /// Success radius around the goal state.
    pub threshold: f64,
    /// Region random steering targets are drawn from.
    pub state_space: BoxDomain,
    pub seed: u64,
}

impl RrtConfig {
    pub fn new(state_space: BoxDomain, threshold: f64, seed: u64) -> Self {
        Self { max_iterations: 4000, candidates: 1000, goal_bias: 0.5, threshold, state_space, seed }
    }
}

struct Node {
    x: Vec<f64>,
    p: Vec<f64>,
    parent: Option<(usize, Vec<f64>)>,
}

/// Grows a tree from the initial state. Each iteration steers the nearest
/// node toward a target (the goal with probability `goal_bias`) by trying
/// `candidates` random actions and keeping the collision-free next state
/// closest to the target. Succeeds once a new node is within `threshold` of
/// the goal; otherwise returns the path to the node nearest the goal with
/// `success` false.
pub fn rrt_plan(model: &MlpModel, scenario: &Scenario, config: &RrtConfig) -> Result<BaselinePath> {
    scenario.validate()?;
    if config.state_space.dim() != scenario.state_dim() {
        return Err(Error::ShapeMismatch("state space does not match the scenario".into()));
    }
    if config.candidates == 0 || !(0.0..=1.0).contains(&config.goal_bias) || !(config.threshold >= 0.0) {
        return Err(Error::InvalidConfig("bad tree planner parameters".into()));
    }
    let step = StepModel::new(model, scenario)?;
    let actions = BoxDomain::new(scenario.action_lower.clone(), scenario.action_upper.clone())?;
    let goal = &scenario.target_state;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut tree = vec![Node {
        x: scenario.initial_state.clone(),
        p: scenario.initial_effector.clone(),
        parent: None,
    }];

    let mut reached = None;
    if distance(&tree[0].x, goal) <= config.threshold {
        reached = Some(0);
    }
    for _ in 0..config.max_iterations {
        if reached.is_some() {
            break;
        }
        let target = if rng.gen::<f64>() < config.goal_bias {
            goal.clone()
        } else {
            uniform_point(&mut rng, &config.state_space)
        };
        let near = nearest(&tree, &target);
        let us: Vec<Vec<f64>> = (0..config.candidates).map(|_| uniform_point(&mut rng, &actions)).collect();
        let (x_near, p_near) = (&tree[near].x, &tree[near].p);
        let nexts = us
            .par_iter()
            .map(|u| step.step(x_near, p_near, u))
            .collect::<Result<Vec<_>>>()?;

        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for (i, (x, u)) in nexts.iter().zip(&us).enumerate() {
            let p: Vec<f64> = p_near.iter().zip(u).map(|(a, b)| a + b).collect();
            if scenario.collides(x, &p) {
                continue;
            }
            let d = distance(x, &target);
            if best.as_ref().is_none_or(|b| d < b.0) {
                best = Some((d, i, p));
            }
        }
        let Some((_, i, p)) = best else { continue };
        let x = nexts[i].clone();
        let done = distance(&x, goal) <= config.threshold;
        tree.push(Node { x, p, parent: Some((near, us[i].clone())) });
        if done {
            reached = Some(tree.len() - 1);
        }
    }

    let end = reached.unwrap_or_else(|| nearest(&tree, goal));
    let mut path = Vec::new();
    let mut at = end;
    while let Some((parent, u)) = &tree[at].parent {
        path.push(u.clone());
        at = *parent;
    }
    path.reverse();
    replay_path(&step, scenario, path, reached.is_some(), config.threshold, tree.len())
}

fn nearest(tree: &[Node], target: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, n) in tree.iter().enumerate() {
        let d = distance(&n.x, target);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::{CostForm, FeatureMode};

    fn point_scenario(target: f64) -> Scenario {
        Scenario {
            initial_state: vec![0.0],
            target_state: vec![target],
            horizon: 1,
            action_lower: vec![-1.0],
            action_upper: vec![1.0],
            initial_effector: vec![0.0],
            obstacles: vec![],
            penalty_scale: 100.0,
            weight_ramp: 0.1,
            step_offset: 0,
            cost_form: CostForm::Tracking,
            features: FeatureMode::Absolute,
            axis_weights: None,
            piece_size: None,
            goal_threshold: None,
        }
    }

    #[test]
    fn reachable_goal_takes_one_step() {
        let m = MlpModel::identity_dynamics(1, 1).unwrap();
        let cfg = RrtConfig::new(BoxDomain::cube(1, -5.0, 5.0).unwrap(), 0.05, 1);
        let r = rrt_plan(&m, &point_scenario(0.5), &cfg).unwrap();
        assert!(r.success && r.reached_goal);
        assert_eq!(r.actions.len(), 1);
    }

    #[test]
    fn unreachable_goal_fails() {
        let m = MlpModel::identity_dynamics(1, 1).unwrap();
        let mut cfg = RrtConfig::new(BoxDomain::cube(1, -50.0, 50.0).unwrap(), 0.05, 1);
        cfg.max_iterations = 10;
        let r = rrt_plan(&m, &point_scenario(30.0), &cfg).unwrap();
        assert!(!r.success);
        assert!(r.actions.len() <= 10);
    }
}
