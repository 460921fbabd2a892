use rand::Rng;
use serde::{Deserialize, Serialize};

use super::autobag::{open_bag, top_insert_and_lift, AutoBagVariant};
use super::flatten::flatten_in;
use super::{Env, EpisodeResult, FailureTag, PolicyConfig, PolicyKind};
use crate::bagsim::{
    attempt_grasp, insert_objects, lift_bag, ActionPrimitive, BagState, GraspOutcome, InsertVia,
    Layers, Upside,
};
use crate::percept::{
    depth_heuristics, perceived_grasp_height, select_grasp_point, DepthHeuristic, GraspMode,
};
use crate::slip::{run_slip, H0Rule, SlipContext, SlipStop};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    PerceivedDepth,
    HandleGrasp,
    MinDepthPlace,
    SobelPlace,
    PinPullSide,
    FlingOpen,
}

impl BaselineKind {
    pub fn policy(self) -> PolicyKind {
        match self {
            BaselineKind::PerceivedDepth => PolicyKind::PerceivedDepth,
            BaselineKind::HandleGrasp => PolicyKind::HandleGrasp,
            BaselineKind::MinDepthPlace => PolicyKind::MinDepthPlace,
            BaselineKind::SobelPlace => PolicyKind::SobelPlace,
            BaselineKind::PinPullSide => PolicyKind::PinPullSide,
            BaselineKind::FlingOpen => PolicyKind::FlingOpen,
        }
    }
}

fn finish(mut r: EpisodeResult, s: &BagState) -> EpisodeResult {
    r.wall_time_sim = s.clock_s;
    r
}

/// Flattening stage shared by the side-insertion pipelines. Returns the
/// flattened state, or `None` after recording the failure.
fn flatten_stage<R: Rng + ?Sized>(
    env: &Env<'_>,
    s: &BagState,
    r: &mut EpisodeResult,
    rng: &mut R,
) -> Option<BagState> {
    let (state, fr) = flatten_in(env, s, rng);
    r.flatten_actions = fr.actions;
    r.flatten_success = fr.success;
    if fr.success {
        Some(state)
    } else {
        r.fail(FailureTag::AFlattenOrient);
        r.wall_time_sim = state.clock_s;
        None
    }
}

/// Turns the bag sideways, inserts past the held top layer and lifts with
/// the held point pinned and the opening center pulled.
fn side_insert_and_lift<R: Rng + ?Sized>(
    env: &Env<'_>,
    mut s: BagState,
    r: &mut EpisodeResult,
    rng: &mut R,
) -> BagState {
    let cfg = env.cfg;
    env.act(&mut s, &ActionPrimitive::rotate(cfg.sideways_turn), rng);
    let (next, inserted) =
        match insert_objects(&s, cfg.n_objects, InsertVia::Side, s.center, &cfg.sim, rng) {
            Ok(v) => v,
            Err(_) => (s.clone(), 0),
        };
    s = next;
    r.objects_inserted = inserted;
    if inserted < cfg.n_objects {
        r.fail(FailureTag::DInsertHit);
    }
    let o = env.observe(&s, rng);
    let pin = s.held_grasp.map(|g| g.point);
    let pull = select_grasp_point(&o, GraspMode::OpeningCenter, rng)
        .ok()
        .map(|t| t.point());
    let (pin, pull) = match (pin, pull) {
        (Some(a), Some(b)) => (a, b),
        _ => match select_grasp_point(&o, GraspMode::PinPullPoints, rng) {
            Ok(t) => t.pair(),
            Err(_) => (s.center, s.center),
        },
    };
    r.objects_contained = lift_bag(&s, pin, pull, &cfg.sim, rng);
    if r.objects_contained < inserted {
        r.fail(FailureTag::DInsertHit);
    }
    s
}

/// Flatten, singulate the top layer with SLIP, turn sideways, insert, lift.
pub fn run_slip_bagging<R: Rng + ?Sized>(
    s: &BagState,
    cfg: &PolicyConfig,
    rng: &mut R,
) -> EpisodeResult {
    let env = Env::new(cfg, s.material.kind);
    let mut r = EpisodeResult::new(PolicyKind::SlipBagging, s.material.kind, 0, cfg.n_objects);
    let Some(state) = flatten_stage(&env, s, &mut r, rng) else {
        return r;
    };
    r.grasp_attempted = true;
    let ctx = SlipContext {
        params: &cfg.slip,
        noise: &env.noise,
        sim: &cfg.sim,
        raster: &env.raster,
    };
    let mut classifier = env.classifier;
    let (state, slip) = match run_slip(&state, ctx, &mut classifier, rng) {
        Ok(v) => v,
        Err(_) => {
            r.fail(FailureTag::BGraspStuck);
            return finish(r, &state);
        }
    };
    r.slip_iterations = slip.iterations_used;
    match slip.stop {
        SlipStop::Success => r.single_layer_success = true,
        SlipStop::FalseAccept => {
            r.fail(FailureTag::FalseAccept);
            return finish(r, &state);
        }
        SlipStop::CapReached | SlipStop::BracketCollapse => {
            let slipped = slip
                .height_trace
                .last()
                .is_some_and(|h| h.true_layers == Layers::One && !h.held);
            r.fail(if slipped {
                FailureTag::CSlipOut
            } else {
                FailureTag::BGraspStuck
            });
            return finish(r, &state);
        }
    }
    let state = side_insert_and_lift(&env, state, &mut r, rng);
    finish(r, &state)
}

/// Runs one of the baseline policies.
pub fn run_baseline<R: Rng + ?Sized>(
    s: &BagState,
    kind: BaselineKind,
    cfg: &PolicyConfig,
    rng: &mut R,
) -> EpisodeResult {
    match kind {
        BaselineKind::PerceivedDepth => perceived_depth(s, cfg, rng),
        BaselineKind::HandleGrasp => handle_grasp(s, cfg, rng),
        BaselineKind::MinDepthPlace => depth_place(s, DepthHeuristic::MinDepth, kind, cfg, rng),
        BaselineKind::SobelPlace => {
            depth_place(s, DepthHeuristic::MaxSobelGradient, kind, cfg, rng)
        }
        BaselineKind::PinPullSide => pin_pull_side(s, cfg, rng),
        BaselineKind::FlingOpen => fling_open(s, cfg, rng),
    }
}

/// One grasp at the perceived surface height, no adjustment.
fn perceived_depth<R: Rng + ?Sized>(
    s: &BagState,
    cfg: &PolicyConfig,
    rng: &mut R,
) -> EpisodeResult {
    let env = Env::new(cfg, s.material.kind);
    let mut r = EpisodeResult::new(
        PolicyKind::PerceivedDepth,
        s.material.kind,
        0,
        cfg.n_objects,
    );
    let Some(mut state) = flatten_stage(&env, s, &mut r, rng) else {
        return r;
    };
    r.grasp_attempted = true;
    let o = env.observe(&state, rng);
    let Ok(target) = select_grasp_point(&o, GraspMode::RimCenterForSlip, rng) else {
        r.fail(FailureTag::BGraspStuck);
        return finish(r, &state);
    };
    let p = target.point();
    let h_min = match cfg.slip.h0_rule {
        H0Rule::PerceivedDepth { h_min } => h_min,
        H0Rule::Fixed { .. } => 0.0,
    };
    let h = perceived_grasp_height(&o, p, h_min);
    let g = match attempt_grasp(&state, p, h, &cfg.sim, rng) {
        Ok(g) => g,
        Err(_) => {
            r.fail(FailureTag::BGraspStuck);
            return finish(r, &state);
        }
    };
    r.slip_iterations = 1;
    state.clock_s += cfg.sim.traj_duration_s;
    if !g.is_single_layer() {
        r.fail(if g.layers == Layers::One {
            FailureTag::CSlipOut
        } else {
            FailureTag::BGraspStuck
        });
        return finish(r, &state);
    }
    r.single_layer_success = true;
    state.held_grasp = Some(g);
    let state = side_insert_and_lift(&env, state, &mut r, rng);
    finish(r, &state)
}

/// Grasp a visible handle and lift it to open the bag. Only a handbag's
/// handles are attached to one layer at the opening.
fn handle_grasp<R: Rng + ?Sized>(s: &BagState, cfg: &PolicyConfig, rng: &mut R) -> EpisodeResult {
    let env = Env::new(cfg, s.material.kind);
    let mut r = EpisodeResult::new(PolicyKind::HandleGrasp, s.material.kind, 0, cfg.n_objects);
    if !s.material.has_handles {
        r.fail(FailureTag::BGraspStuck);
        return finish(r, s);
    }
    let Some(mut state) = flatten_stage(&env, s, &mut r, rng) else {
        return r;
    };
    let o = env.observe(&state, rng);
    let p = match select_grasp_point(&o, GraspMode::HandleCenter, rng) {
        Ok(t) => t.point(),
        Err(_) => {
            r.fail(FailureTag::BGraspStuck);
            return finish(r, &state);
        }
    };
    r.slip_iterations = 1;
    state.clock_s += cfg.sim.traj_duration_s;
    if s.material.kind.is_plastic() {
        // Side handles: lifting one folds the bag instead of opening it.
        r.fail(FailureTag::DInsertHit);
        return finish(r, &state);
    }
    r.grasp_attempted = true;
    if rng.random::<f64>() < cfg.baselines.hg_handbag_error {
        r.fail(FailureTag::BGraspStuck);
        return finish(r, &state);
    }
    r.single_layer_success = true;
    let z = state.z_bot_mean_at(p);
    state.held_grasp = Some(GraspOutcome {
        layers: Layers::One,
        held: true,
        z_bot: z,
        z_top: z + state.material.layer_gap_mean,
        point: p,
        height: z + 0.5 * state.material.layer_gap_mean,
    });
    let state = side_insert_and_lift(&env, state, &mut r, rng);
    finish(r, &state)
}

/// Open the bag with the AutoBag stages, then drop objects at a depth-image
/// heuristic point instead of the opening estimate.
fn depth_place<R: Rng + ?Sized>(
    s: &BagState,
    heuristic: DepthHeuristic,
    kind: BaselineKind,
    cfg: &PolicyConfig,
    rng: &mut R,
) -> EpisodeResult {
    let env = Env::new(cfg, s.material.kind);
    let mut r = EpisodeResult::new(kind.policy(), s.material.kind, 0, cfg.n_objects);
    let Some(state) = open_bag(&env, s, AutoBagVariant::Full, &mut r, rng) else {
        return r;
    };
    let o = env.observe(&state, rng);
    let target = match depth_heuristics(&o, heuristic) {
        Ok(p) => p,
        Err(_) => {
            r.fail(FailureTag::DInsertHit);
            return finish(r, &state);
        }
    };
    let state = top_insert_and_lift(&env, state, Some(target), &mut r, rng);
    finish(r, &state)
}

/// Pin the bottom layer and pull the top one; only works if the layers
/// already happen to be apart.
fn pin_pull_side<R: Rng + ?Sized>(s: &BagState, cfg: &PolicyConfig, rng: &mut R) -> EpisodeResult {
    let env = Env::new(cfg, s.material.kind);
    let mut r = EpisodeResult::new(PolicyKind::PinPullSide, s.material.kind, 0, cfg.n_objects);
    let Some(mut state) = flatten_stage(&env, s, &mut r, rng) else {
        return r;
    };
    r.grasp_attempted = true;
    let o = env.observe(&state, rng);
    let pull = match select_grasp_point(&o, GraspMode::RimCenterForSlip, rng) {
        Ok(t) => t.point(),
        Err(_) => {
            r.fail(FailureTag::BGraspStuck);
            return finish(r, &state);
        }
    };
    if let Ok(next) = crate::bagsim::apply_primitive(
        &state,
        &ActionPrimitive::PinPull {
            pin: state.center,
            pull,
        },
        &cfg.sim,
        rng,
    ) {
        state = next;
    }
    r.flatten_actions += 1;
    if rng.random::<f64>() >= cfg.baselines.pin_pull_separation {
        r.fail(FailureTag::BGraspStuck);
        return finish(r, &state);
    }
    r.single_layer_success = true;
    let z = state.z_bot_mean_at(pull);
    state.held_grasp = Some(GraspOutcome {
        layers: Layers::One,
        held: true,
        z_bot: z,
        z_top: z + state.material.layer_gap_mean,
        point: pull,
        height: z + 0.5 * state.material.layer_gap_mean,
    });
    let state = side_insert_and_lift(&env, state, &mut r, rng);
    finish(r, &state)
}

/// Shake twice, fling three times, then hold both handles apart and drop
/// the objects in from above.
fn fling_open<R: Rng + ?Sized>(s: &BagState, cfg: &PolicyConfig, rng: &mut R) -> EpisodeResult {
    const SHAKES: u32 = 2;
    const FLINGS: u32 = 3;
    let env = Env::new(cfg, s.material.kind);
    let mut r = EpisodeResult::new(PolicyKind::FlingOpen, s.material.kind, 0, cfg.n_objects);
    let mut state = s.clone();
    let mut recenters = 0;
    for k in 0..SHAKES + FLINGS {
        env.maybe_recenter(&mut state, &mut recenters, rng);
        let o = env.observe(&state, rng);
        let a = if k < SHAKES {
            select_grasp_point(&o, GraspMode::HandleCenter, rng)
                .map(|t| ActionPrimitive::shake(t.point()))
        } else {
            select_grasp_point(&o, GraspMode::LeftRightEndpoints, rng).map(|t| {
                let (left, right) = t.pair();
                ActionPrimitive::Fling { left, right }
            })
        };
        if let Ok(a) = a {
            env.act(&mut state, &a, rng);
        }
        r.flatten_actions += 1;
    }
    if !state.material.has_handles {
        r.fail(FailureTag::BGraspStuck);
        return finish(r, &state);
    }
    r.grasp_attempted = true;
    let p = cfg.baselines.fling_handle_one_layer;
    let both_single = rng.random::<f64>() < p && rng.random::<f64>() < p;
    if !both_single {
        r.fail(FailureTag::BGraspStuck);
        return finish(r, &state);
    }
    r.single_layer_success = true;
    if rng.random::<f64>() >= cfg.baselines.fling_survive {
        r.fail(FailureTag::AFlattenOrient);
        return finish(r, &state);
    }
    r.flatten_success = true;
    state.upside = Upside::Up;
    state.set_opening(cfg.autobag.a2, 1.5, cfg.sim.opening_cap);
    let state = top_insert_and_lift(&env, state, None, &mut r, rng);
    finish(r, &state)
}
