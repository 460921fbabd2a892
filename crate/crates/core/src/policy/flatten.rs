use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Env, FlattenThresholds, PolicyConfig};
use crate::bagsim::{ActionPrimitive, BagState, MaterialKind};
use crate::geom::{min_area_rect, wrap_angle, Point2};
use crate::percept::{select_grasp_point, GraspMode, Observation, OpeningMetrics};

/// Next move of the flattening state machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum FlattenStep {
    Shake,
    Dilate,
    Fling,
    /// Rotate the bag by this angle (radians).
    Rotate {
        angle: f64,
    },
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlattenResult {
    pub success: bool,
    /// Counted actions (recentering excluded).
    pub actions: u32,
    pub recenters: u32,
}

/// Branch rule on the visible area ratio `s` and the opening heading
/// relative to the forward axis. An unknown heading above `p_large`
/// means the rim is hidden, so the bag is shaken to reorient it.
pub fn flatten_branch(
    s: f64,
    opening_angle: Option<f64>,
    kind: MaterialKind,
    th: &FlattenThresholds,
) -> FlattenStep {
    if s < th.p_small {
        FlattenStep::Shake
    } else if s <= th.p_large {
        if kind.is_plastic() {
            FlattenStep::Dilate
        } else {
            FlattenStep::Fling
        }
    } else {
        match opening_angle {
            None => FlattenStep::Shake,
            Some(a) if a.abs() > th.alpha => FlattenStep::Rotate { angle: -a },
            Some(_) => FlattenStep::Done,
        }
    }
}

/// Heading used by the branch rule, dropped when the rim centroid is too
/// close to the bag centroid to define a direction.
pub(crate) fn heading(m: &OpeningMetrics, min_rim_offset: f64) -> Option<f64> {
    m.opening_angle.filter(|_| m.rim_offset >= min_rim_offset)
}

/// Rotation that brings the short axis of the visible bag onto the
/// workspace x axis, if it is off by more than `tol`.
fn short_axis_correction(o: &Observation, tol: f64) -> Option<f64> {
    let pts: Vec<Point2> = o.bag_pixels().into_iter().map(|k| o.center_of(k)).collect();
    let rect = min_area_rect(&pts).ok()?;
    let short = rect.angle + 0.5 * std::f64::consts::PI;
    // Axes are undirected: fold into (-pi/2, pi/2].
    let mut off = wrap_angle(short);
    if off > 0.5 * std::f64::consts::PI {
        off -= std::f64::consts::PI;
    } else if off <= -0.5 * std::f64::consts::PI {
        off += std::f64::consts::PI;
    }
    (off.abs() > tol).then_some(-off)
}

/// Observe, branch and act until the bag is flat and aligned or the
/// action budget runs out.
pub fn flatten<R: Rng + ?Sized>(
    s: &BagState,
    cfg: &PolicyConfig,
    rng: &mut R,
) -> (BagState, FlattenResult) {
    let env = Env::new(cfg, s.material.kind);
    flatten_in(&env, s, rng)
}

pub(crate) fn flatten_in<R: Rng + ?Sized>(
    env: &Env<'_>,
    s: &BagState,
    rng: &mut R,
) -> (BagState, FlattenResult) {
    let cfg = env.cfg;
    let mut state = s.clone();
    let mut result = FlattenResult {
        success: false,
        actions: 0,
        recenters: 0,
    };
    loop {
        env.maybe_recenter(&mut state, &mut result.recenters, rng);
        let o = env.observe(&state, rng);
        let step = match env.metrics(&o, &state) {
            Some(m) => flatten_branch(
                m.s,
                heading(&m, cfg.min_rim_offset),
                state.material.kind,
                &cfg.flatten,
            ),
            None => FlattenStep::Shake,
        };
        if step == FlattenStep::Done {
            result.success = true;
            return (state, result);
        }
        if result.actions >= cfg.action_cap {
            return (state, result);
        }
        result.actions += 1;
        match step {
            FlattenStep::Shake => {
                if let Ok(t) = select_grasp_point(&o, GraspMode::HandleCenter, rng) {
                    env.act(&mut state, &ActionPrimitive::shake(t.point()), rng);
                }
            }
            FlattenStep::Dilate => match short_axis_correction(&o, cfg.flatten.alpha) {
                Some(angle) => {
                    env.act(&mut state, &ActionPrimitive::rotate(angle), rng);
                }
                None => {
                    env.act(
                        &mut state,
                        &ActionPrimitive::DilateFlatten { axis: 0.0 },
                        rng,
                    );
                }
            },
            FlattenStep::Fling => {
                if let Ok(t) = select_grasp_point(&o, GraspMode::LeftRightEndpoints, rng) {
                    let (left, right) = t.pair();
                    env.act(&mut state, &ActionPrimitive::Fling { left, right }, rng);
                }
            }
            FlattenStep::Rotate { angle } => {
                env.act(&mut state, &ActionPrimitive::rotate(angle), rng);
            }
            FlattenStep::Done => unreachable!(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bagsim::BagsimParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const DEG: f64 = std::f64::consts::PI / 180.0;

    #[test]
    fn branch_grid() {
        let th = FlattenThresholds::default();
        let plastic = MaterialKind::ThinPlastic;
        let fabric = MaterialKind::HandBag;
        let cases = [
            (0.30, Some(5.0 * DEG), plastic, FlattenStep::Shake),
            (0.30, Some(40.0 * DEG), fabric, FlattenStep::Shake),
            (0.70, Some(5.0 * DEG), plastic, FlattenStep::Dilate),
            (0.70, Some(40.0 * DEG), fabric, FlattenStep::Fling),
            (0.90, Some(5.0 * DEG), plastic, FlattenStep::Done),
            (
                0.90,
                Some(40.0 * DEG),
                fabric,
                FlattenStep::Rotate { angle: -40.0 * DEG },
            ),
            (0.90, None, plastic, FlattenStep::Shake),
        ];
        for (s, a, k, want) in cases {
            assert_eq!(flatten_branch(s, a, k, &th), want, "s={s} a={a:?} {k}");
        }
    }

    #[test]
    fn band_edges_are_inclusive_upward() {
        let th = FlattenThresholds::default();
        let k = MaterialKind::Drawstring;
        assert_eq!(flatten_branch(0.45, Some(0.0), k, &th), FlattenStep::Fling);
        assert_eq!(flatten_branch(0.85, Some(0.0), k, &th), FlattenStep::Fling);
        assert_eq!(
            flatten_branch(0.8500001, Some(0.0), k, &th),
            FlattenStep::Done
        );
        assert_eq!(
            flatten_branch(0.9, Some(15.0 * DEG), k, &th),
            FlattenStep::Done
        );
    }

    #[test]
    fn flatten_respects_cap_and_mostly_succeeds() {
        let cfg = PolicyConfig::default();
        let mut ok = 0;
        for seed in 0..40 {
            let m = cfg.materials.get(MaterialKind::ThinPlastic);
            let s = BagState::from_seed(m, &BagsimParams::default(), seed);
            let (out, r) = flatten(&s, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            assert!(r.actions <= cfg.action_cap);
            if r.success {
                ok += 1;
                assert!(
                    out.area_ratio() > 0.7,
                    "flattened area {}",
                    out.area_ratio()
                );
            }
        }
        assert!(ok >= 30, "{ok}/40 flattened");
    }
}
