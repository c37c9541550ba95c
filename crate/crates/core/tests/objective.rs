//! The unrolled planning objective against step-by-step rollouts, model files
//! and the synthetic benchmark.

use babnd_core::model_io::{
    build_objective, build_synthetic, generate_model, CostForm, FeatureMode, MlpModel, Obstacle,
    Scenario, StepModel, SyntheticObjective,
};
use babnd_core::Objective;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenario(rng: &mut ChaCha8Rng, points: usize, k: usize, horizon: usize, form: CostForm, features: FeatureMode) -> Scenario {
    let s = points * k;
    let mut v = |n: usize, a: f64| (0..n).map(|_| rng.gen_range(-a..=a)).collect::<Vec<f64>>();
    Scenario {
        initial_state: v(s, 0.5),
        target_state: v(s, 0.5),
        horizon,
        action_lower: vec![-0.2; k],
        action_upper: vec![0.2; k],
        initial_effector: v(k, 0.3),
        obstacles: vec![Obstacle { center: v(k, 0.5), size: 0.3 }],
        penalty_scale: 50.0,
        weight_ramp: 0.1,
        step_offset: 0,
        cost_form: form,
        features,
        axis_weights: Some((0..k).map(|j| 1.0 / (j + 1) as f64).collect()),
        piece_size: Some(0.1),
        goal_threshold: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unrolled_graph_matches_rollout(
        seed in any::<u64>(),
        points in 1usize..=3,
        k in 1usize..=2,
        horizon in 1usize..=4,
        form in prop_oneof![Just(CostForm::Tracking), Just(CostForm::TrackingObstacles), Just(CostForm::PusherPenalty)],
        relative in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = if relative { FeatureMode::Relative } else { FeatureMode::Absolute };
        let sc = scenario(&mut rng, points, k, horizon, form, features);
        let s = points * k;
        let model = generate_model(rng.gen(), &[s + k, 8, s]).unwrap();
        let obj = build_objective(&model, &sc).unwrap();
        let step = StepModel::new(&model, &sc).unwrap();
        for _ in 0..5 {
            let u: Vec<f64> = (0..k * horizon).map(|_| rng.gen_range(-0.2..=0.2)).collect();
            let (xs, ps) = step.rollout(&sc.initial_state, &sc.initial_effector, &u).unwrap();
            let expected: f64 = xs.iter().zip(&ps).enumerate().map(|(t, (x, p))| sc.step_cost(t + 1, x, p)).sum();
            let got = obj.graph.evaluate_batch(&u).unwrap()[0];
            prop_assert!((got - expected).abs() <= 1e-9 * (1.0 + expected.abs()), "{got} vs {expected}");
        }
    }

    #[test]
    fn synthetic_value_is_the_sum_of_terms(xs in prop::collection::vec(-1.0f64..=1.0, 1..10)) {
        let f = build_synthetic(xs.len()).unwrap();
        let direct: f64 = xs.iter().map(|x| 5.0 * x * x + (50.0 * x).cos()).sum();
        let v = f.evaluate_batch(&xs).unwrap()[0];
        prop_assert!((v - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn term_min_is_below_a_fine_grid(a in -1.0f64..1.0, w in 0.0f64..1.0) {
        let b = (a + w).min(1.0);
        let exact = SyntheticObjective::term_min(a, b);
        let n = 20_000;
        let grid = (0..=n).map(|i| SyntheticObjective::term(a + (b - a) * i as f64 / n as f64)).fold(f64::INFINITY, f64::min);
        prop_assert!(exact <= grid + 1e-12);
        // The grid spacing is at most 1e-4; the term's curvature is bounded
        // by 10 + 2500, so the grid overshoots the minimum by < 2e-5.
        prop_assert!(grid - exact < 2e-5, "{exact} vs {grid}");
    }
}

#[test]
fn global_term_minimum_matches_grid_oracle() {
    let n = 2_000_001;
    let grid = (0..n).map(|i| SyntheticObjective::term(-1.0 + 2.0 * i as f64 / (n - 1) as f64)).fold(f64::INFINITY, f64::min);
    let g = SyntheticObjective::term_global_min();
    assert!((g - grid).abs() < 1e-6, "{g} vs {grid}");
    assert!((g + 0.9803).abs() < 1e-4, "{g}");
}

#[test]
fn identity_dynamics_translate_the_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for relative in [true, false] {
        let features = if relative { FeatureMode::Relative } else { FeatureMode::Absolute };
        let sc = scenario(&mut rng, 3, 2, 2, CostForm::Tracking, features);
        let m = MlpModel::identity_dynamics(2, 3).unwrap();
        let step = StepModel::new(&m, &sc).unwrap();
        let u = [0.1, -0.2];
        let next = step.step(&sc.initial_state, &sc.initial_effector, &u).unwrap();
        for (i, (a, b)) in next.iter().zip(&sc.initial_state).enumerate() {
            assert!((a - b - u[i % 2]).abs() < 1e-15);
        }
    }
}

#[test]
fn model_file_round_trips() {
    let m = generate_model(11, &[6, 16, 16, 4]).unwrap();
    let text = m.to_json().unwrap();
    let back = MlpModel::from_json(&text).unwrap();
    assert_eq!(back, m);
    let x = [0.1, -0.3, 0.7, 0.0, 0.2, -0.9];
    assert_eq!(back.forward(&x).unwrap(), m.forward(&x).unwrap());
    assert_eq!(generate_model(11, &[6, 16, 16, 4]).unwrap().digest(), m.digest());
    assert_ne!(generate_model(12, &[6, 16, 16, 4]).unwrap().digest(), m.digest());
}

#[test]
fn tampered_model_file_is_rejected() {
    let m = generate_model(1, &[3, 4, 2]).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
    let s = v.to_string();
    let first = v["layers"][0]["bias"][0].as_f64().unwrap();
    v["layers"][0]["bias"][0] = serde_json::json!(first + 1.0);
    assert_ne!(v.to_string(), s);
    assert!(MlpModel::from_json(&v.to_string()).is_err());
}

#[test]
fn mismatched_scenario_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let sc = scenario(&mut rng, 2, 2, 3, CostForm::Tracking, FeatureMode::Relative);
    let m = generate_model(0, &[5, 8, 4]).unwrap();
    assert!(build_objective(&m, &sc).is_err());
}
