use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use babnd_core::model_io::{generate_model, CostForm, FeatureMode, MlpModel, Scenario};

use super::ensure_dir;
use crate::manifest::digest_of;
use crate::{resolve_out_dir, RunInfo, EXIT_OK};

#[derive(Args, Debug)]
pub struct GenModelArgs {
    /// Keypoints per state.
    #[arg(long, default_value_t = 2)]
    pub points: usize,
    /// Coordinates per keypoint; also the action dimension.
    #[arg(long, default_value_t = 2)]
    pub point_dim: usize,
    /// Hidden layer widths.
    #[arg(long, value_delimiter = ',', default_values_t = [32, 32])]
    pub hidden: Vec<usize>,
    /// Exact rigid-motion dynamics `x' = x + u` instead of random weights.
    #[arg(long)]
    pub identity: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a scenario matching the model.
    #[arg(long)]
    pub scenario: bool,
    #[arg(long, default_value_t = 4)]
    pub horizon: usize,
    /// Symmetric action bound per coordinate.
    #[arg(long, default_value_t = 0.2)]
    pub action_bound: f64,
    /// Place the target at the initial state.
    #[arg(long)]
    pub at_target: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

pub fn make_model(a: &GenModelArgs) -> Result<MlpModel> {
    if a.points == 0 || a.point_dim == 0 {
        bail!("points and point-dim must be positive");
    }
    let s = a.points * a.point_dim;
    if a.identity {
        return Ok(MlpModel::identity_dynamics(a.point_dim, a.points)?);
    }
    let mut widths = vec![s + a.point_dim];
    widths.extend(&a.hidden);
    widths.push(s);
    Ok(generate_model(a.seed, &widths)?)
}

/// Random start in `[-0.5, 0.5]^s`. The target is the start moved by a random
/// feasible action sequence under identity dynamics, so it is reachable there;
/// for learned dynamics it is just a nearby point.
pub fn make_scenario(a: &GenModelArgs) -> Result<Scenario> {
    if !(a.action_bound > 0.0 && a.action_bound.is_finite()) {
        bail!("action bound must be positive");
    }
    let (k, s) = (a.point_dim, a.points * a.point_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.wrapping_add(1));
    let initial: Vec<f64> = (0..s).map(|_| rng.gen_range(-0.5..=0.5)).collect();
    let shift: Vec<f64> = (0..k)
        .map(|_| (0..a.horizon).map(|_| rng.gen_range(-a.action_bound..=a.action_bound)).sum())
        .collect();
    let target = if a.at_target {
        initial.clone()
    } else {
        initial.iter().enumerate().map(|(i, v)| v + shift[i % k]).collect()
    };
    let scenario = Scenario {
        initial_state: initial,
        target_state: target,
        horizon: a.horizon,
        action_lower: vec![-a.action_bound; k],
        action_upper: vec![a.action_bound; k],
        initial_effector: vec![0.0; k],
        obstacles: Vec::new(),
        penalty_scale: babnd_core::model_io::DEFAULT_PENALTY_SCALE,
        weight_ramp: babnd_core::model_io::DEFAULT_WEIGHT_RAMP,
        step_offset: 0,
        cost_form: CostForm::Tracking,
        features: FeatureMode::Relative,
        axis_weights: None,
        piece_size: None,
        goal_threshold: None,
    };
    scenario.validate()?;
    Ok(scenario)
}

pub fn run(a: &GenModelArgs) -> Result<RunInfo> {
    let model = make_model(a)?;
    let dir = resolve_out_dir(&a.out_dir, "gen-model");
    ensure_dir(&dir)?;
    let model_path = dir.join("model.json");
    model.save(&model_path)?;
    let mut outputs = vec![model_path];
    if a.scenario {
        let path = dir.join("scenario.json");
        make_scenario(a)?.save(&path)?;
        outputs.push(path);
    }
    println!("model {} parameters={} digest={}", outputs[0].display(), model.parameter_count(), model.digest());
    Ok(RunInfo {
        exit_code: EXIT_OK,
        out_dir: Some(dir),
        outputs,
        config_digest: digest_of(&(a.points, a.point_dim, &a.hidden, a.identity, a.horizon, a.action_bound, a.at_target))?,
        model_digest: Some(model.digest().to_string()),
        seed: a.seed,
    })
}
