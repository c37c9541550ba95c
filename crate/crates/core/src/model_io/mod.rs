//! Dynamics models, scenarios and the objectives built from them.

mod builder;
mod mlp;
mod scenario;
mod synthetic;

pub use builder::{build_objective, PlanningObjective};
pub use mlp::{generate_model, load_model, Layer, MlpModel, ModelMeta, MODEL_FORMAT, MODEL_VERSION};
pub use scenario::{
    CostForm, FeatureMode, Obstacle, Scenario, StepModel, DEFAULT_PENALTY_SCALE,
    DEFAULT_WEIGHT_RAMP,
};
pub use synthetic::{build_synthetic, critical_points, SyntheticObjective, CRITICAL_GRID_STEP};
