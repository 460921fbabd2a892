use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{normal, uniform, BagError, BagState, BagsimParams, LATERAL_AXIS};
use crate::geom::{wrap_angle, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layers {
    Zero,
    One,
    Two,
}

impl Layers {
    pub fn count(self) -> usize {
        match self {
            Layers::Zero => 0,
            Layers::One => 1,
            Layers::Two => 2,
        }
    }

    pub fn from_count(n: usize) -> Self {
        match n {
            0 => Layers::Zero,
            1 => Layers::One,
            _ => Layers::Two,
        }
    }

    /// Layer count taken by a gripper closing at height `h` over the layer
    /// interval `(z_bot, z_top]`.
    pub fn at_height(h: f64, z_bot: f64, z_top: f64) -> Self {
        if h > z_top {
            Layers::Zero
        } else if h > z_bot {
            Layers::One
        } else {
            Layers::Two
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspOutcome {
    pub layers: Layers,
    /// False when the fabric slipped out of the gripper.
    pub held: bool,
    pub z_bot: f64,
    pub z_top: f64,
    pub point: Point2,
    pub height: f64,
}

impl GraspOutcome {
    pub fn is_single_layer(&self) -> bool {
        self.layers == Layers::One && self.held
    }
}

/// What the robot experienced while running the cyclic trajectory. The true
/// layer count is only read by the classifier model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionTrace {
    pub true_layers: Layers,
    pub held: bool,
    pub duration_s: f64,
    pub tilt_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertVia {
    Side,
    Top,
}

fn truncated_positive<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    for _ in 0..16 {
        let z = normal(rng, mean, sd);
        if z > 0.0 {
            return z;
        }
    }
    0.05
}

/// Closes the gripper at height `h` (mm above the table) at world point `p`.
pub fn attempt_grasp<R: Rng + ?Sized>(
    s: &BagState,
    p: Point2,
    h: f64,
    params: &BagsimParams,
    rng: &mut R,
) -> Result<GraspOutcome, BagError> {
    if !params.workspace.contains(p) || !p.is_finite() {
        return Err(BagError::OutOfWorkspace { x: p.x, y: p.y });
    }
    let h = h.max(0.0);
    let m = &s.material;
    let (z_bot, z_top) = match s.forced_layers {
        Some(f) => (f.z_bot, f.z_top),
        None => {
            let z_bot = truncated_positive(rng, s.z_bot_mean_at(p), m.z_bot_sd);
            let gap = normal(rng, m.layer_gap_mean, m.layer_gap_sd).max(0.2);
            (z_bot, z_bot + gap)
        }
    };
    let layers = if s.footprint.contains(p) {
        Layers::at_height(h, z_bot, z_top)
    } else {
        Layers::Zero
    };
    let held = match layers {
        Layers::Zero => false,
        Layers::One => rng.random::<f64>() >= m.slip_1layer_prob * m.stiffness,
        Layers::Two => true,
    };
    Ok(GraspOutcome {
        layers,
        held,
        z_bot,
        z_top,
        point: p,
        height: h,
    })
}

/// Lifts, tilts and returns the grasped bag along a closed path. The bag
/// comes back nearly where it was.
pub fn execute_cyclic_trajectory<R: Rng + ?Sized>(
    s: &BagState,
    g: &GraspOutcome,
    params: &BagsimParams,
    rng: &mut R,
) -> (BagState, InteractionTrace) {
    let mut next = s.clone();
    let r = params.traj_shift * rng.random::<f64>().sqrt();
    let shift = Point2::from_angle(rng.random_range(0.0..std::f64::consts::TAU)) * r;
    let rot = uniform(rng, (-params.traj_rot_deg, params.traj_rot_deg)).to_radians();
    let pivot = next.footprint.centroid();
    next.center = next.center.rotate_about(pivot, rot) + shift;
    next.opening_dir = (next.opening_dir + rot).rem_euclid(std::f64::consts::TAU);
    next.loosened =
        (next.loosened + uniform(rng, (-params.traj_loosen, params.traj_loosen))).clamp(0.0, 1.0);
    next.clock_s += params.traj_duration_s;
    next.rebuild();
    let trace = InteractionTrace {
        true_layers: g.layers,
        held: g.held,
        duration_s: params.traj_duration_s,
        tilt_deg: params.traj_tilt_deg,
    };
    (next, trace)
}

/// Inserts `n` objects either sideways past a held top layer or from above
/// at `target`.
pub fn insert_objects<R: Rng + ?Sized>(
    s: &BagState,
    n: u32,
    via: InsertVia,
    target: Point2,
    params: &BagsimParams,
    rng: &mut R,
) -> Result<(BagState, u32), BagError> {
    let mut next = s.clone();
    let inserted = match via {
        InsertVia::Side => {
            match s.held_grasp {
                Some(g) if g.is_single_layer() => {}
                _ => return Err(BagError::NoGraspHeld),
            }
            let mut p = params.p_side_base;
            let misalign = wrap_angle(s.opening_dir - LATERAL_AXIS).abs();
            if misalign > params.side_align_tol_deg.to_radians() {
                p -= params.side_misalign_penalty;
            }
            if s.material.has_handles && s.material.kind.is_plastic() {
                p -= params.side_plastic_penalty;
            }
            let p = p.clamp(0.0, 1.0);
            (0..n).filter(|_| rng.random::<f64>() < p).count() as u32
        }
        InsertVia::Top => {
            let fits = s.opening_poly.contains(target)
                && s.opening_poly.boundary_distance(target) >= params.object_radius;
            if fits {
                n
            } else {
                0
            }
        }
    };
    if via == InsertVia::Top && inserted > 0 {
        for k in 0..next.handles.len() {
            let occluded = (0..inserted).any(|_| rng.random::<f64>() < params.handle_occlude_prob);
            if occluded {
                next.set_handle_visible(k, false);
            }
        }
    }
    next.objects_inside += inserted;
    Ok((next, inserted))
}

/// Lifts the bag with a pin/pull grasp pair and returns how many objects
/// stay inside.
pub fn lift_bag<R: Rng + ?Sized>(
    s: &BagState,
    pin: Point2,
    pull: Point2,
    params: &BagsimParams,
    rng: &mut R,
) -> u32 {
    if s.objects_inside == 0 {
        return 0;
    }
    let mut anchors: Vec<Point2> = s.handles.iter().map(|h| h.center).collect();
    anchors.push(s.rim_centroid());
    let good = |p: Point2| anchors.iter().any(|a| a.distance(p) <= params.lift_r_good);
    if good(pin) && good(pull) {
        s.objects_inside
    } else {
        (0..s.objects_inside)
            .filter(|_| rng.random::<f64>() < params.lift_retain_prob)
            .count() as u32
    }
}
