use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slip_core::bagsim::{BagState, BagsimParams, LayerPair, Layers, MaterialKind, MaterialPresets};
use slip_core::geom::{convex_hull, elongation, min_area_rect, orient, wrap_angle, Point2};
use slip_core::percept::PerceptionNoise;
use slip_core::policy::{run_episode, FailureTag, PolicyConfig, PolicyKind};
use slip_core::slip::{
    run_slip, ClassifierModel, H0Rule, SlipContext, SlipParams, StepState,
    Strategy as HeightStrategy,
};

fn points(max: usize) -> impl Strategy<Value = Vec<Point2>> {
    prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 3..max)
        .prop_map(|v| v.into_iter().map(|(x, y)| Point2::new(x, y)).collect())
}

proptest! {
    #[test]
    fn hull_is_convex_and_encloses_input(pts in points(40)) {
        let Ok(hull) = convex_hull(&pts) else { return Ok(()) };
        let v = hull.vertices();
        for i in 0..v.len() {
            let (a, b, c) = (v[i], v[(i + 1) % v.len()], v[(i + 2) % v.len()]);
            prop_assert!(orient(a, b, c) > 0.0);
        }
        for &p in &pts {
            for (a, b) in hull.edges() {
                prop_assert!(orient(a, b, p) >= -1e-9 * (b - a).norm().max(1.0));
            }
        }
    }

    #[test]
    fn min_rect_encloses_points(pts in points(30)) {
        let Ok(rect) = min_area_rect(&pts) else { return Ok(()) };
        let (a, b) = rect.half_extents;
        prop_assert!(a >= b);
        for &p in &pts {
            let l = rect.to_local(p);
            prop_assert!(l.x.abs() <= a + 1e-7 && l.y.abs() <= b + 1e-7);
        }
        let xs = pts.iter().map(|p| p.x);
        let ys = pts.iter().map(|p| p.y);
        let w = xs.clone().fold(f64::NEG_INFINITY, f64::max) - xs.fold(f64::INFINITY, f64::min);
        let h = ys.clone().fold(f64::NEG_INFINITY, f64::max) - ys.fold(f64::INFINITY, f64::min);
        prop_assert!(rect.area() <= w * h + 1e-7);
        prop_assert!(elongation(&pts).unwrap() >= 1.0);
    }

    #[test]
    fn wrapped_angles_are_half_open(a in -100.0..100.0f64) {
        let w = wrap_angle(a);
        prop_assert!(w > -PI - 1e-12 && w <= PI + 1e-12);
        prop_assert!(((a - w) / (2.0 * PI) - ((a - w) / (2.0 * PI)).round()).abs() < 1e-9);
    }

    #[test]
    fn symmetric_classifiers_are_row_stochastic(e in 0.0..=1.0f64) {
        ClassifierModel::with_error(e).validate().unwrap();
    }

    #[test]
    fn fixed_step_moves_by_exact_increments(h in 3.0..15.0f64, up in any::<bool>()) {
        let params = SlipParams::default();
        let mut st = StepState::new(&params);
        let (pred, want) = if up { (Layers::Two, h + params.dh_plus) } else { (Layers::Zero, h - params.dh_minus) };
        prop_assert_eq!(st.next_height(h, pred).unwrap(), want.clamp(0.0, params.h_ceiling));
    }

    #[test]
    fn slip_results_respect_caps(
        z_bot in 0.5..6.0f64,
        gap in 0.5..5.0f64,
        h0 in 0.0..18.0f64,
        error in 0.0..0.3f64,
        bisect in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let sim = BagsimParams::default();
        let m = MaterialPresets::default().thin_plastic;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = BagState::new_flat(&m, &sim, &mut rng);
        s.forced_layers = Some(LayerPair { z_bot, z_top: z_bot + gap });
        let params = SlipParams {
            h0_rule: H0Rule::Fixed { h: h0 },
            strategy: if bisect { HeightStrategy::Bisection } else { HeightStrategy::FixedStep },
            ..SlipParams::default()
        };
        let raster = sim.workspace.raster();
        let ctx = SlipContext { params: &params, noise: &PerceptionNoise::zero(), sim: &sim, raster: &raster };
        let (_, r) = run_slip(&s, ctx, &mut ClassifierModel::with_error(error), &mut rng).unwrap();
        prop_assert!(r.iterations_used <= params.total_iteration_cap);
        prop_assert!(r.trials_used <= params.trial_max);
        prop_assert_eq!(r.iterations_used as usize, r.height_trace.len());
        if r.success {
            let last = r.height_trace.last().unwrap();
            prop_assert_eq!(last.true_layers, Layers::One);
            prop_assert!(last.held);
        }
        for step in &r.height_trace {
            prop_assert!((0.0..=params.h_ceiling).contains(&step.h));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn episode_records_are_consistent(p in 0..PolicyKind::ALL.len(), m in 0..MaterialKind::BAGS.len(), seed in any::<u64>()) {
        let cfg = PolicyConfig::default();
        let (policy, material) = (PolicyKind::ALL[p], MaterialKind::BAGS[m]);
        let r = run_episode(policy, material, &cfg, seed);
        prop_assert_eq!(r.seed, seed);
        prop_assert!(r.objects_contained <= r.objects_inserted);
        prop_assert!(r.objects_inserted <= r.n_objects);
        prop_assert!(!r.single_layer_success || r.grasp_attempted);
        prop_assert!(r.flatten_actions <= cfg.action_cap);
        prop_assert!(r.slip_iterations <= cfg.slip.total_iteration_cap);
        prop_assert!(!r.full_success() || r.failure_tag == FailureTag::None);
        prop_assert!(r.wall_time_sim >= 0.0);
        prop_assert_eq!(&r, &run_episode(policy, material, &cfg, seed));
    }
}
