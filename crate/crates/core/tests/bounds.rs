//! Property tests for the relaxations and the lower bounds.

use babnd_core::audit::{random_box, random_linear_graph, random_mlp_graph};
use babnd_core::crown::{lower_bound, relax_relu, AlphaPolicy, BoundingMode, CrownConfig, StopRule};
use babnd_core::{BoxDomain, Objective};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample_points(rng: &mut ChaCha8Rng, dom: &BoxDomain, n: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(n * dom.dim());
    for _ in 0..n {
        for j in 0..dom.dim() {
            v.push(rng.gen_range(dom.lower()[j]..=dom.upper()[j]));
        }
    }
    v
}

fn corners(dom: &BoxDomain) -> Vec<f64> {
    let d = dom.dim();
    let mut v = Vec::new();
    for mask in 0..1usize << d {
        for j in 0..d {
            v.push(if mask >> j & 1 == 1 { dom.upper()[j] } else { dom.lower()[j] });
        }
    }
    v
}

fn modes() -> Vec<CrownConfig> {
    vec![
        CrownConfig { mode: BoundingMode::FullCrown, ..Default::default() },
        CrownConfig::default(),
        CrownConfig { stop: StopRule::None, ..Default::default() },
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn relaxation_sandwiches_relu(
        l in -5.0f64..5.0,
        w in 0.0f64..5.0,
        alpha in prop::option::of(0.0f64..=1.0),
        ts in prop::collection::vec(0.0f64..=1.0, 1..20),
    ) {
        let u = l + w;
        let policy = alpha.map_or(AlphaPolicy::Adaptive, AlphaPolicy::Fixed);
        let r = relax_relu(&[l], &[u], policy).unwrap();
        for t in ts {
            let z = l + t * (u - l);
            let relu = z.max(0.0);
            let lo = r.lower_slope[0] * z + r.lower_offset[0];
            let hi = r.upper_slope[0] * z + r.upper_offset[0];
            let tol = 1e-12 * (1.0 + z.abs());
            prop_assert!(lo <= relu + tol, "lower {lo} > relu {relu} at {z} in [{l}, {u}]");
            prop_assert!(hi >= relu - tol, "upper {hi} < relu {relu} at {z} in [{l}, {u}]");
        }
    }

    #[test]
    fn bound_is_below_sampled_values(seed in any::<u64>(), d in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_mlp_graph(&mut rng, d).unwrap();
        let dom = random_box(&mut rng, d);
        let mut pts = sample_points(&mut rng, &dom, 2000);
        pts.extend(corners(&dom));
        let min = g.evaluate_batch(&pts).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        for cfg in modes() {
            let b = lower_bound(&g, &dom, &cfg, None).unwrap();
            prop_assert!(b.sound);
            prop_assert!(b.lf <= min + 1e-9 * (1.0 + min.abs()), "{:?}: lf {} > {}", cfg.mode, b.lf, min);
        }
    }

    #[test]
    fn linear_bound_is_the_vertex_minimum(seed in any::<u64>(), d in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_linear_graph(&mut rng, d).unwrap();
        let dom = random_box(&mut rng, d);
        let min = g.evaluate_batch(&corners(&dom)).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        for cfg in modes() {
            let lf = lower_bound(&g, &dom, &cfg, None).unwrap().lf;
            prop_assert!((lf - min).abs() <= 1e-9 * (1.0 + min.abs()), "{lf} vs {min}");
        }
    }

    #[test]
    fn full_bound_is_exact_on_a_point(seed in any::<u64>(), d in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_mlp_graph(&mut rng, d).unwrap();
        let x = sample_points(&mut rng, &BoxDomain::cube(d, -1.0, 1.0).unwrap(), 1);
        let v = g.evaluate_batch(&x).unwrap()[0];
        let cfg = CrownConfig { mode: BoundingMode::FullCrown, ..Default::default() };
        let lf = lower_bound(&g, &BoxDomain::point(&x).unwrap(), &cfg, None).unwrap().lf;
        prop_assert!((lf - v).abs() <= 1e-9 * (1.0 + v.abs()), "{lf} vs {v}");
    }

    #[test]
    fn bisected_children_stay_sound(seed in any::<u64>(), d in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_mlp_graph(&mut rng, d).unwrap();
        let dom = random_box(&mut rng, d);
        let cfg = CrownConfig { mode: BoundingMode::FullCrown, ..Default::default() };
        let j = rng.gen_range(0..d);
        let (a, b) = dom.bisect(j);
        let children = lower_bound(&g, &a, &cfg, None).unwrap().lf.min(lower_bound(&g, &b, &cfg, None).unwrap().lf);
        let mut pts = sample_points(&mut rng, &dom, 2000);
        pts.extend(corners(&dom));
        let min = g.evaluate_batch(&pts).unwrap().into_iter().fold(f64::INFINITY, f64::min);
        prop_assert!(children <= min + 1e-9 * (1.0 + min.abs()));
    }
}
