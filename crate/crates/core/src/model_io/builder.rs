//! Unrolls a dynamics model over a horizon into one objective graph.

use super::mlp::MlpModel;
use super::scenario::{CostForm, FeatureMode, Scenario};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::graph::{CompGraph, GraphBuilder, NodeId};
use crate::linalg::Matrix;

/// The planning objective `f(u)` together with its root box.
#[derive(Clone, Debug)]
pub struct PlanningObjective {
    pub graph: CompGraph,
    pub domain: BoxDomain,
    /// Predicted states `x_1..x_H`.
    pub state_nodes: Vec<NodeId>,
    /// Effector positions `p_1..p_H`.
    pub effector_nodes: Vec<NodeId>,
    /// Scalar cost of each step.
    pub cost_nodes: Vec<NodeId>,
}

pub fn build_objective(model: &MlpModel, scenario: &Scenario) -> Result<PlanningObjective> {
    scenario.validate()?;
    let (s, k, h) = (scenario.state_dim(), scenario.action_dim(), scenario.horizon);
    if model.input_dim() != s + k || model.output_dim() != s {
        return Err(Error::ShapeMismatch(format!(
            "model maps {} -> {} but the scenario has state dim {s} and action dim {k}",
            model.input_dim(),
            model.output_dim()
        )));
    }

    let mut b = GraphBuilder::new();
    let u = b.input(k * h)?;
    b.label(u, "actions");
    let mut x = b.constant(scenario.initial_state.clone())?;
    let mut p = b.constant(scenario.initial_effector.clone())?;
    let axis = scenario.state_axis_weights();
    let domain = BoxDomain::repeat(&scenario.action_lower, &scenario.action_upper, h)?;
    let (mut state_nodes, mut effector_nodes, mut cost_nodes) = (vec![], vec![], vec![]);

    for t in 1..=h {
        let ut = b.slice(u, (t - 1) * k, k)?;
        b.label(ut, format!("action[{t}]"));
        let features = match scenario.features {
            FeatureMode::Relative => {
                let stacked = b.concat(&[x, p, ut])?;
                b.linear(stacked, relative_features(s, k)?, vec![0.0; s + k])?
            }
            FeatureMode::Absolute => b.concat(&[x, ut])?,
        };
        let mut hid = features;
        for (i, layer) in model.layers().iter().enumerate() {
            hid = b.linear(hid, layer.weight.clone(), layer.bias.clone())?;
            if layer.relu {
                hid = b.relu(hid)?;
                b.label(hid, format!("relu[{t}][{i}]"));
            }
        }
        let next = match scenario.features {
            FeatureMode::Relative => {
                let stacked = b.concat(&[hid, p])?;
                b.linear(stacked, add_tiled(s, k)?, vec![0.0; s])?
            }
            FeatureMode::Absolute => hid,
        };
        let pt = b.sum(&[p, ut])?;
        b.label(next, format!("state[{t}]"));
        b.label(pt, format!("effector[{t}]"));

        let track = b.squared_distance(next, scenario.target_state.clone(), axis.clone())?;
        let mut terms = vec![b.scalar_affine(track, scenario.tracking_weight(t), 0.0)?];
        let lambda = scenario.penalty_scale;
        match scenario.cost_form {
            CostForm::Tracking => {}
            CostForm::TrackingObstacles => {
                for o in &scenario.obstacles {
                    terms.push(b.penalty_hinge(pt, o.center.clone(), o.size, lambda)?);
                    let per_point = b.penalty_hinge(next, o.center.clone(), o.size, lambda)?;
                    terms.push(sum_entries(&mut b, per_point)?);
                }
            }
            CostForm::PusherPenalty => {
                let size = scenario.piece_size.unwrap_or_default();
                let stacked = b.concat(&[next, pt])?;
                let offsets = b.linear(stacked, effector_offsets(s, k)?, vec![0.0; s])?;
                let per_point = b.penalty_hinge(offsets, vec![0.0; k], size, lambda)?;
                terms.push(sum_entries(&mut b, per_point)?);
            }
        }
        let cost = if terms.len() == 1 { terms[0] } else { b.sum(&terms)? };
        b.label(cost, format!("cost[{t}]"));

        state_nodes.push(next);
        effector_nodes.push(pt);
        cost_nodes.push(cost);
        x = next;
        p = pt;
    }

    let total = if h == 1 { cost_nodes[0] } else { b.sum(&cost_nodes)? };
    Ok(PlanningObjective {
        graph: b.build(total)?,
        domain,
        state_nodes,
        effector_nodes,
        cost_nodes,
    })
}

/// `[x; p; u] -> [x_i - p_{i mod k}; u]`.
fn relative_features(s: usize, k: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(s + k, s + 2 * k);
    for i in 0..s {
        m.set(i, i, 1.0);
        m.set(i, s + i % k, -1.0);
    }
    for j in 0..k {
        m.set(s + j, s + k + j, 1.0);
    }
    Ok(m)
}

/// `[y; p] -> y + tile(p)`.
fn add_tiled(s: usize, k: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(s, s + k);
    for i in 0..s {
        m.set(i, i, 1.0);
        m.set(i, s + i % k, 1.0);
    }
    Ok(m)
}

/// `[x; p] -> [p - x_i]` per point.
fn effector_offsets(s: usize, k: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(s, s + k);
    for i in 0..s {
        m.set(i, i, -1.0);
        m.set(i, s + i % k, 1.0);
    }
    Ok(m)
}

fn sum_entries(b: &mut GraphBuilder, x: NodeId) -> Result<NodeId> {
    let n = b.dim(x);
    if n == 1 {
        return Ok(x);
    }
    b.linear(x, Matrix::new(1, n, vec![1.0; n])?, vec![0.0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::mlp::Layer;
    use crate::model_io::scenario::Obstacle;

    fn identity_model(s: usize, k: usize) -> MlpModel {
        // Relative frame: output = x - p, so the next state equals the current one.
        let mut w = Matrix::zeros(s, s + k);
        for i in 0..s {
            w.set(i, i, 1.0);
        }
        MlpModel::new(vec![Layer { weight: w, bias: vec![0.0; s], relu: false }]).unwrap()
    }

    fn scenario(h: usize) -> Scenario {
        Scenario {
            initial_state: vec![0.2, 0.1],
            target_state: vec![0.2, 0.1],
            horizon: h,
            action_lower: vec![-0.1, -0.1],
            action_upper: vec![0.1, 0.1],
            initial_effector: vec![0.0, 0.0],
            obstacles: vec![],
            penalty_scale: 100.0,
            weight_ramp: 0.1,
            step_offset: 0,
            cost_form: CostForm::Tracking,
            features: FeatureMode::Relative,
            axis_weights: None,
            piece_size: None,
            goal_threshold: None,
        }
    }

    #[test]
    fn already_at_target_costs_nothing() {
        let obj = build_objective(&identity_model(2, 2), &scenario(1)).unwrap();
        assert_eq!(obj.graph.evaluate(&[0.0, 0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn input_dim_is_action_dim_times_horizon() {
        let obj = build_objective(&identity_model(2, 2), &scenario(3)).unwrap();
        assert_eq!(obj.graph.input_dim(), 6);
        assert_eq!(obj.domain.dim(), 6);
        assert_eq!(obj.state_nodes.len(), 3);
    }

    #[test]
    fn model_shape_is_checked() {
        assert!(matches!(
            build_objective(&identity_model(4, 2), &scenario(1)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn effector_obstacle_is_penalized() {
        let mut sc = scenario(1);
        sc.cost_form = CostForm::TrackingObstacles;
        sc.obstacles.push(Obstacle { center: vec![0.1, 0.0], size: 0.05 });
        let obj = build_objective(&identity_model(2, 2), &sc).unwrap();
        let hit = obj.graph.evaluate(&[0.1, 0.0]).unwrap()[0];
        let miss = obj.graph.evaluate(&[-0.1, 0.0]).unwrap()[0];
        assert!((hit - 100.0 * 0.05).abs() < 1e-12);
        assert_eq!(miss, 0.0);
    }
}
