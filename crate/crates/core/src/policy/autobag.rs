use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AutoBagThresholds, Env, EpisodeResult, FailureTag, PolicyConfig, PolicyKind};
use crate::bagsim::{insert_objects, lift_bag, normal, ActionPrimitive, BagState, InsertVia};
use crate::geom::{min_area_rect, wrap_angle, Point2};
use crate::percept::{select_grasp_point, GraspMode, Observation, OpeningMetrics, PixelClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoBagVariant {
    Full,
    /// Insert as soon as the stage-1 gate passes, without dilation.
    NoStage2,
}

/// Next move of the two-stage opening policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum AutoBagStep {
    Shake,
    Compress,
    Flip,
    /// Rotate the bag by this angle (radians) to level the opening.
    Rotate {
        angle: f64,
    },
    DilateOpening,
    Insert,
}

/// Chooses the next move from the current metrics. `compress_next` picks
/// between the alternating stage-1 moves; `rim_axis_offset` is the angle
/// of the rim's long axis from the workspace x axis.
pub fn autobag_step(
    m: &OpeningMetrics,
    variant: AutoBagVariant,
    compress_next: bool,
    rim_axis_offset: Option<f64>,
    th: &AutoBagThresholds,
    align_tol: f64,
) -> AutoBagStep {
    if !th.stage1_passed(m) {
        if m.s < th.s1 {
            AutoBagStep::Shake
        } else if compress_next {
            AutoBagStep::Compress
        } else {
            AutoBagStep::Flip
        }
    } else if variant == AutoBagVariant::NoStage2 || th.stage2_passed(m) {
        AutoBagStep::Insert
    } else {
        match rim_axis_offset {
            Some(off) if off.abs() > align_tol => AutoBagStep::Rotate { angle: -off },
            _ => AutoBagStep::DilateOpening,
        }
    }
}

/// Long-axis angle of the rim pixels folded into (-pi/2, pi/2].
fn rim_axis_offset(o: &Observation) -> Option<f64> {
    let pts: Vec<Point2> = o
        .pixels_of(PixelClass::Rim)
        .into_iter()
        .map(|k| o.center_of(k))
        .collect();
    let rect = min_area_rect(&pts).ok()?;
    let mut off = wrap_angle(rect.angle);
    if off > 0.5 * PI {
        off -= PI;
    } else if off <= -0.5 * PI {
        off += PI;
    }
    Some(off)
}

/// Runs the opening stages. Returns the opened state, or `None` after
/// recording an exhausted action budget.
pub(crate) fn open_bag<R: Rng + ?Sized>(
    env: &Env<'_>,
    s: &BagState,
    variant: AutoBagVariant,
    r: &mut EpisodeResult,
    rng: &mut R,
) -> Option<BagState> {
    let cfg = env.cfg;
    let mut state = s.clone();
    let mut recenters = 0;
    let mut compress_next = true;
    loop {
        env.maybe_recenter(&mut state, &mut recenters, rng);
        let o = env.observe(&state, rng);
        let step = match env.metrics(&o, &state) {
            Some(m) => autobag_step(
                &m,
                variant,
                compress_next,
                rim_axis_offset(&o),
                &cfg.autobag,
                cfg.baselines.dilate_align_tol,
            ),
            None => AutoBagStep::Shake,
        };
        if step == AutoBagStep::Insert {
            r.flatten_success = true;
            r.wall_time_sim = state.clock_s;
            return Some(state);
        }
        if r.flatten_actions >= cfg.action_cap {
            r.fail(FailureTag::ActionCapExceeded);
            r.wall_time_sim = state.clock_s;
            return None;
        }
        r.flatten_actions += 1;
        let action = match step {
            AutoBagStep::Shake => select_grasp_point(&o, GraspMode::HandleCenter, rng)
                .ok()
                .map(|t| ActionPrimitive::shake(t.point())),
            AutoBagStep::Compress => {
                compress_next = false;
                select_grasp_point(&o, GraspMode::BottomCenter, rng)
                    .or_else(|_| select_grasp_point(&o, GraspMode::BagCenter, rng))
                    .ok()
                    .map(|t| ActionPrimitive::compress(t.point()))
            }
            AutoBagStep::Flip => {
                compress_next = true;
                Some(ActionPrimitive::flip())
            }
            AutoBagStep::Rotate { angle } => Some(ActionPrimitive::rotate(angle)),
            AutoBagStep::DilateOpening => select_grasp_point(&o, GraspMode::OpeningCenter, rng)
                .ok()
                .map(|t| {
                    ActionPrimitive::dilate_opening(
                        t.point(),
                        cfg.baselines.dilate_depth,
                        cfg.baselines.dilate_torque,
                    )
                }),
            AutoBagStep::Insert => unreachable!(),
        };
        if let Some(a) = action {
            env.act(&mut state, &a, rng);
        }
    }
}

/// Drops the objects one at a time from above, at `target` or at the
/// re-estimated opening center, then lifts with the pin-pull pair.
pub(crate) fn top_insert_and_lift<R: Rng + ?Sized>(
    env: &Env<'_>,
    mut s: BagState,
    target: Option<Point2>,
    r: &mut EpisodeResult,
    rng: &mut R,
) -> BagState {
    let cfg = env.cfg;
    let sd = cfg.baselines.top_insert_sd;
    let mut inserted = 0;
    for _ in 0..cfg.n_objects {
        let aim = match target {
            Some(p) => Some(p),
            None => {
                let o = env.observe(&s, rng);
                select_grasp_point(&o, GraspMode::OpeningCenter, rng)
                    .ok()
                    .map(|t| t.point())
            }
        };
        let Some(aim) = aim else {
            continue;
        };
        let p = aim + Point2::new(normal(rng, 0.0, sd), normal(rng, 0.0, sd));
        if let Ok((next, n)) = insert_objects(&s, 1, InsertVia::Top, p, &cfg.sim, rng) {
            s = next;
            inserted += n;
        }
    }
    r.objects_inserted = inserted;
    if inserted < cfg.n_objects {
        r.fail(FailureTag::DInsertHit);
    }
    let o = env.observe(&s, rng);
    let (pin, pull) = match select_grasp_point(&o, GraspMode::PinPullPoints, rng) {
        Ok(t) => t.pair(),
        Err(_) => (s.center, s.center),
    };
    r.objects_contained = lift_bag(&s, pin, pull, &cfg.sim, rng);
    if r.objects_contained < inserted {
        r.fail(FailureTag::DInsertHit);
    }
    s
}

/// AutoBag: open the bag upward in two gated stages, insert from above,
/// lift with pin and pull.
pub fn run_autobag<R: Rng + ?Sized>(
    s: &BagState,
    cfg: &PolicyConfig,
    variant: AutoBagVariant,
    rng: &mut R,
) -> EpisodeResult {
    let env = Env::new(cfg, s.material.kind);
    let policy = match variant {
        AutoBagVariant::Full => PolicyKind::AutoBag,
        AutoBagVariant::NoStage2 => PolicyKind::AutoBagD,
    };
    let mut r = EpisodeResult::new(policy, s.material.kind, 0, cfg.n_objects);
    let Some(state) = open_bag(&env, s, variant, &mut r, rng) else {
        return r;
    };
    let state = top_insert_and_lift(&env, state, None, &mut r, rng);
    r.wall_time_sim = state.clock_s;
    r
}
