//! Planning scenarios and the single-step dynamics convention shared by the
//! objective builder, the baselines and closed-loop execution.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::MlpModel;
use crate::error::{Error, Result};
use crate::linalg::distance;

pub const DEFAULT_PENALTY_SCALE: f64 = 100.0;
pub const DEFAULT_WEIGHT_RAMP: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub center: Vec<f64>,
    pub size: f64,
}

/// Which terms enter the per-step cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostForm {
    /// `w_t * tracking`.
    Tracking,
    /// Tracking plus obstacle hinges on the effector and on every keypoint.
    #[default]
    TrackingObstacles,
    /// Tracking plus hinges keeping the effector away from every keypoint.
    PusherPenalty,
}

/// How the dynamics model sees the state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Input: keypoints relative to the effector position before the action,
    /// then the action. Output: next keypoints in that same frame.
    #[default]
    Relative,
    /// Input: raw state then action. Output: next state.
    Absolute,
}

/// Lengths are in meters. States are stacks of points whose dimension equals
/// the action dimension `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub initial_state: Vec<f64>,
    pub target_state: Vec<f64>,
    pub horizon: usize,
    pub action_lower: Vec<f64>,
    pub action_upper: Vec<f64>,
    pub initial_effector: Vec<f64>,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default = "default_penalty_scale")]
    pub penalty_scale: f64,
    /// `gamma` in `w_t = 1 + gamma * (t - 1 + step_offset)`.
    #[serde(default = "default_weight_ramp")]
    pub weight_ramp: f64,
    /// Steps already executed before this plan starts (closed-loop replanning).
    #[serde(default)]
    pub step_offset: usize,
    #[serde(default)]
    pub cost_form: CostForm,
    #[serde(default)]
    pub features: FeatureMode,
    /// Per-axis tracking weights, one per point coordinate. Defaults to ones.
    #[serde(default)]
    pub axis_weights: Option<Vec<f64>>,
    /// Keep-out radius around each keypoint for [`CostForm::PusherPenalty`].
    #[serde(default)]
    pub piece_size: Option<f64>,
    /// Goal tolerance for the tree and roadmap planners.
    #[serde(default)]
    pub goal_threshold: Option<f64>,
}

fn default_penalty_scale() -> f64 {
    DEFAULT_PENALTY_SCALE
}

fn default_weight_ramp() -> f64 {
    DEFAULT_WEIGHT_RAMP
}

impl Scenario {
    pub fn action_dim(&self) -> usize {
        self.action_lower.len()
    }

    pub fn state_dim(&self) -> usize {
        self.initial_state.len()
    }

    pub fn point_count(&self) -> usize {
        self.state_dim() / self.action_dim()
    }

    /// `w_t` for step `t` in `1..=horizon`.
    pub fn tracking_weight(&self, t: usize) -> f64 {
        1.0 + self.weight_ramp * (t - 1 + self.step_offset) as f64
    }

    /// Tracking weights tiled over all state coordinates.
    pub fn state_axis_weights(&self) -> Vec<f64> {
        let k = self.action_dim();
        let axis = self.axis_weights.clone().unwrap_or_else(|| vec![1.0; k]);
        (0..self.state_dim()).map(|i| axis[i % k]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        let k = self.action_dim();
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        if k == 0 || self.action_upper.len() != k {
            return bad(format!(
                "action bounds have lengths {} and {}",
                k,
                self.action_upper.len()
            ));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.action_lower) || !finite(&self.action_upper) {
            return bad("non-finite action bound".into());
        }
        if let Some(j) = (0..k).find(|&j| self.action_lower[j] > self.action_upper[j]) {
            return bad(format!("action lower bound exceeds upper bound at {j}"));
        }
        if self.state_dim() == 0 || self.target_state.len() != self.state_dim() {
            return bad(format!(
                "initial state has {} coordinates, target has {}",
                self.state_dim(),
                self.target_state.len()
            ));
        }
        if !finite(&self.initial_state) || !finite(&self.target_state) {
            return bad("non-finite state".into());
        }
        if self.initial_effector.len() != k || !finite(&self.initial_effector) {
            return bad(format!("initial effector must have {k} finite coordinates"));
        }
        let needs_points = self.features == FeatureMode::Relative
            || !self.obstacles.is_empty()
            || self.cost_form == CostForm::PusherPenalty
            || self.axis_weights.is_some();
        if needs_points && !self.state_dim().is_multiple_of(k) {
            return bad(format!(
                "state dim {} is not a multiple of the point dim {k}",
                self.state_dim()
            ));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if o.center.len() != k || !finite(&o.center) {
                return bad(format!("obstacle {i} center must have {k} finite coordinates"));
            }
            if !(o.size > 0.0 && o.size.is_finite()) {
                return bad(format!("obstacle {i} size must be > 0"));
            }
        }
        if !(self.penalty_scale >= 0.0 && self.penalty_scale.is_finite()) {
            return bad("penalty scale must be >= 0".into());
        }
        if !self.weight_ramp.is_finite() {
            return bad("weight ramp must be finite".into());
        }
        if let Some(t) = (1..=self.horizon).find(|&t| self.tracking_weight(t) <= 0.0) {
            return bad(format!("tracking weight w_{t} is not positive"));
        }
        if let Some(w) = &self.axis_weights {
            if w.len() != k || w.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return bad(format!("axis weights must be {k} non-negative values"));
            }
        }
        if self.cost_form == CostForm::PusherPenalty
            && !self.piece_size.is_some_and(|s| s > 0.0 && s.is_finite())
        {
            return bad("pusher penalty needs a positive piece_size".into());
        }
        if let Some(d) = self.goal_threshold {
            if !(d >= 0.0 && d.is_finite()) {
                return bad("goal threshold must be >= 0".into());
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// The remaining problem after `executed` steps, starting from `(x, p)`.
    pub fn advanced(&self, x: &[f64], p: &[f64], executed: usize) -> Scenario {
        Scenario {
            initial_state: x.to_vec(),
            initial_effector: p.to_vec(),
            horizon: self.horizon - executed,
            step_offset: self.step_offset + executed,
            ..self.clone()
        }
    }

    /// Sum of unscaled hinge arguments `relu(s - dist)`; positive iff the
    /// effector or a keypoint is inside a keep-out region.
    pub fn penalty_terms(&self, x: &[f64], p: &[f64]) -> f64 {
        let k = self.action_dim();
        match self.cost_form {
            CostForm::Tracking => 0.0,
            CostForm::TrackingObstacles => self
                .obstacles
                .iter()
                .map(|o| {
                    (o.size - distance(p, &o.center)).max(0.0)
                        + x.chunks_exact(k)
                            .map(|pt| (o.size - distance(pt, &o.center)).max(0.0))
                            .sum::<f64>()
                })
                .sum(),
            CostForm::PusherPenalty => {
                let s = self.piece_size.unwrap_or(0.0);
                x.chunks_exact(k).map(|pt| (s - distance(p, pt)).max(0.0)).sum()
            }
        }
    }

    pub fn collides(&self, x: &[f64], p: &[f64]) -> bool {
        self.penalty_terms(x, p) > 0.0
    }

    /// `c_t(x_t, p_t)` for step `t` in `1..=horizon`.
    pub fn step_cost(&self, t: usize, x: &[f64], p: &[f64]) -> f64 {
        let w = self.state_axis_weights();
        let track: f64 = x
            .iter()
            .zip(&self.target_state)
            .zip(&w)
            .map(|((a, b), w)| w * (a - b) * (a - b))
            .sum();
        self.tracking_weight(t) * track + self.penalty_scale * self.penalty_terms(x, p)
    }
}

/// One application of the dynamics model under a scenario's feature convention.
pub struct StepModel<'a> {
    model: &'a MlpModel,
    features: FeatureMode,
    point_dim: usize,
}

impl<'a> StepModel<'a> {
    pub fn new(model: &'a MlpModel, scenario: &Scenario) -> Result<Self> {
        let (s, k) = (scenario.state_dim(), scenario.action_dim());
        if model.input_dim() != s + k || model.output_dim() != s {
            return Err(Error::ShapeMismatch(format!(
                "model maps {} -> {}, scenario needs {} -> {s}",
                model.input_dim(),
                model.output_dim(),
                s + k
            )));
        }
        Ok(Self { model, features: scenario.features, point_dim: k })
    }

    pub fn features(&self, x: &[f64], p: &[f64], u: &[f64]) -> Vec<f64> {
        let mut f = Vec::with_capacity(x.len() + u.len());
        match self.features {
            FeatureMode::Relative => {
                for pt in x.chunks_exact(self.point_dim) {
                    f.extend(pt.iter().zip(p).map(|(a, b)| a - b));
                }
            }
            FeatureMode::Absolute => f.extend_from_slice(x),
        }
        f.extend_from_slice(u);
        f
    }

    /// Next object state from state `x`, effector `p` (before the move) and
    /// action `u`. The effector moves to `p + u`.
    pub fn step(&self, x: &[f64], p: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        let mut next = self.model.forward(&self.features(x, p, u))?;
        if self.features == FeatureMode::Relative {
            for (i, v) in next.iter_mut().enumerate() {
                *v += p[i % self.point_dim];
            }
        }
        Ok(next)
    }

    /// States `x_1..x_H` and effectors `p_1..p_H` under a flattened action sequence.
    pub fn rollout(
        &self,
        x0: &[f64],
        p0: &[f64],
        actions: &[f64],
    ) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let k = self.point_dim;
        let mut xs = Vec::new();
        let mut ps = Vec::new();
        let (mut x, mut p) = (x0.to_vec(), p0.to_vec());
        for u in actions.chunks_exact(k) {
            x = self.step(&x, &p, u)?;
            p = p.iter().zip(u).map(|(a, b)| a + b).collect();
            xs.push(x.clone());
            ps.push(p.clone());
        }
        Ok((xs, ps))
    }
}
