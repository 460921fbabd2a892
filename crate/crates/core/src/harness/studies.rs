use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::splitmix64;
use crate::bagsim::{attempt_grasp, BagState, BagsimParams, LayerPair, Layers, MaterialKind};
use crate::percept::PerceptionNoise;
use crate::policy::PolicyConfig;
use crate::slip::{run_slip, ClassifierModel, H0Rule, SlipContext, SlipParams, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub material: MaterialKind,
    /// Gripper height above the table (mm).
    pub h: f64,
    /// `h` minus the material's expected flat surface height.
    pub h_above_surface: f64,
    pub n: u32,
    pub p_zero: f64,
    pub p_one: f64,
    pub p_two: f64,
}

/// Empirical layer-count distribution of a single grasp at each height on
/// flattened bags. Sample `k` uses the same bag and the same layer draws
/// at every height, so the curves are monotone in height by construction.
pub fn grasp_height_histogram(
    material: MaterialKind,
    heights: &[f64],
    n_per_height: u32,
    cfg: &PolicyConfig,
    seed: u64,
) -> Vec<HistogramRow> {
    let m = cfg.materials.get(material);
    let mut counts = vec![[0u32; 3]; heights.len()];
    for k in 0..n_per_height {
        let sample_seed = splitmix64(seed ^ splitmix64(k as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        let bag = BagState::new_flat(m, &cfg.sim, &mut rng);
        let p = bag.rim_centroid();
        let grasp_seed: u64 = rng.random();
        for (hi, &h) in heights.iter().enumerate() {
            let mut g_rng = ChaCha8Rng::seed_from_u64(grasp_seed);
            let layers = attempt_grasp(&bag, p, h, &cfg.sim, &mut g_rng)
                .map(|g| g.layers)
                .unwrap_or(Layers::Zero);
            counts[hi][layers.count()] += 1;
        }
    }
    let n = n_per_height.max(1) as f64;
    heights
        .iter()
        .zip(counts)
        .map(|(&h, c)| HistogramRow {
            material,
            h,
            h_above_surface: h - m.surface_height(),
            n: n_per_height,
            p_zero: c[0] as f64 / n,
            p_one: c[1] as f64 / n,
            p_two: c[2] as f64 / n,
        })
        .collect()
}

/// Ranges of the synthetic static layer intervals (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticIntervals {
    pub z_bot: (f64, f64),
    pub gap: (f64, f64),
    /// Start height above the top layer.
    pub h0_above_top: (f64, f64),
}

impl Default for StaticIntervals {
    fn default() -> Self {
        Self {
            z_bot: (1.0, 4.0),
            gap: (2.0, 4.0),
            h0_above_top: (0.0, 3.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: String,
    pub error: f64,
    pub runs: u32,
    pub successes: u32,
    pub success_rate: f64,
    pub false_accepts: u32,
    pub mean_iterations: f64,
}

/// Success rate of each height strategy on static layer intervals (no bag
/// drift between grasps) with a symmetric classifier error. One trial of up to `iter_max` iterations per
/// run; run `r` sees the same interval and start height under every strategy.
pub fn strategy_comparison(
    strategies: &[Strategy],
    errors: &[f64],
    runs: u32,
    iter_max: u32,
    intervals: StaticIntervals,
    cfg: &PolicyConfig,
    seed: u64,
) -> Vec<StrategyRow> {
    let mut material = cfg.materials.thin_plastic.clone();
    material.slip_1layer_prob = 0.0;
    let sim = BagsimParams {
        traj_shift: 0.0,
        traj_rot_deg: 0.0,
        ..cfg.sim.clone()
    };
    let raster = sim.workspace.raster();
    let noise = PerceptionNoise {
        handle_visible_prob: 0.0,
        ..PerceptionNoise::zero()
    };
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    };
    let mut rows = Vec::new();
    for &error in errors {
        for &strategy in strategies {
            let mut successes = 0;
            let mut false_accepts = 0;
            let mut iterations = 0u64;
            for r in 0..runs {
                let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(r as u64)));
                let z_bot = draw(&mut rng, intervals.z_bot);
                let z_top = z_bot + draw(&mut rng, intervals.gap);
                let h0 = z_top + draw(&mut rng, intervals.h0_above_top);
                let mut bag = BagState::new_flat(&material, &sim, &mut rng);
                bag.forced_layers = Some(LayerPair { z_bot, z_top });
                let params = SlipParams {
                    h0_rule: H0Rule::Fixed { h: h0 },
                    strategy,
                    trial_max: 1,
                    iter_max,
                    total_iteration_cap: iter_max.max(1),
                    ..cfg.slip
                };
                let ctx = SlipContext {
                    params: &params,
                    noise: &noise,
                    sim: &sim,
                    raster: &raster,
                };
                let mut classifier = ClassifierModel::with_error(error);
                if let Ok((_, res)) = run_slip(&bag, ctx, &mut classifier, &mut rng) {
                    successes += res.success as u32;
                    false_accepts += res.false_accept() as u32;
                    iterations += res.iterations_used as u64;
                }
            }
            rows.push(StrategyRow {
                strategy: strategy.name(),
                error,
                runs,
                successes,
                success_rate: successes as f64 / runs.max(1) as f64,
                false_accepts,
                mean_iterations: iterations as f64 / runs.max(1) as f64,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_rows_sum_to_one_and_are_monotone() {
        let cfg = PolicyConfig::default();
        let heights: Vec<f64> = (1..=10).map(f64::from).collect();
        let rows = grasp_height_histogram(MaterialKind::ThinPlastic, &heights, 400, &cfg, 5);
        for w in rows.windows(2) {
            assert!(w[1].p_zero >= w[0].p_zero);
            assert!(w[1].p_two <= w[0].p_two);
        }
        for r in &rows {
            assert!((r.p_zero + r.p_one + r.p_two - 1.0).abs() <= 1e-9);
        }
        assert_eq!(rows[0].p_zero, 0.0);
        assert!(rows[9].p_zero > 0.9);
    }

    #[test]
    fn noiseless_strategies_all_succeed() {
        let cfg = PolicyConfig::default();
        let strategies = [
            Strategy::FixedStep,
            Strategy::DecayingStep { gamma: 0.8 },
            Strategy::Bisection,
        ];
        let rows = strategy_comparison(
            &strategies,
            &[0.0],
            100,
            15,
            StaticIntervals::default(),
            &cfg,
            1,
        );
        for r in rows {
            assert_eq!(r.successes, 100, "{}", r.strategy);
            assert_eq!(r.false_accepts, 0);
        }
    }
}
