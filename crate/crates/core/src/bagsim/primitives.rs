use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{normal, split_scale, uniform, BagError, BagState, BagsimParams, Upside};
use crate::geom::Point2;

/// Grasp points may sit this far outside the footprint (pixel quantisation).
const ON_BAG_TOLERANCE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionPrimitive {
    Shake {
        grasp: Point2,
        k_s: u32,
        amplitude: f64,
        freq: f64,
    },
    Fold {
        grasp: Point2,
        d: f64,
    },
    Compress {
        grasp: Point2,
        k_c: u32,
        pause: f64,
        alpha: f64,
    },
    Flip {
        alpha: f64,
    },
    Rotate {
        angle: f64,
        bimanual: bool,
    },
    DilateFlatten {
        axis: f64,
    },
    DilateOpening {
        center: Point2,
        alpha: f64,
        theta: f64,
        d: f64,
        torque_limit: f64,
        offset: f64,
    },
    Fling {
        left: Point2,
        right: Point2,
    },
    Recenter,
    PinPull {
        pin: Point2,
        pull: Point2,
    },
}

impl ActionPrimitive {
    pub fn shake(grasp: Point2) -> Self {
        ActionPrimitive::Shake {
            grasp,
            k_s: 3,
            amplitude: 0.7 * PI,
            freq: 0.4,
        }
    }

    pub fn fold(grasp: Point2) -> Self {
        ActionPrimitive::Fold { grasp, d: 28.0 }
    }

    pub fn compress(grasp: Point2) -> Self {
        ActionPrimitive::Compress {
            grasp,
            k_c: 4,
            pause: 0.9,
            alpha: PI / 7.0,
        }
    }

    pub fn flip() -> Self {
        ActionPrimitive::Flip { alpha: PI / 4.0 }
    }

    pub fn rotate(angle: f64) -> Self {
        ActionPrimitive::Rotate {
            angle,
            bimanual: true,
        }
    }

    pub fn dilate_opening(center: Point2, d: f64, torque_limit: f64) -> Self {
        ActionPrimitive::DilateOpening {
            center,
            alpha: PI / 3.0,
            theta: 0.0,
            d,
            torque_limit,
            offset: 0.02,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActionPrimitive::Shake { .. } => "shake",
            ActionPrimitive::Fold { .. } => "fold",
            ActionPrimitive::Compress { .. } => "compress",
            ActionPrimitive::Flip { .. } => "flip",
            ActionPrimitive::Rotate { .. } => "rotate",
            ActionPrimitive::DilateFlatten { .. } => "dilate_flatten",
            ActionPrimitive::DilateOpening { .. } => "dilate_opening",
            ActionPrimitive::Fling { .. } => "fling",
            ActionPrimitive::Recenter => "recenter",
            ActionPrimitive::PinPull { .. } => "pin_pull",
        }
    }

    fn grasp_points(&self) -> Vec<Point2> {
        match *self {
            ActionPrimitive::Shake { grasp, .. }
            | ActionPrimitive::Fold { grasp, .. }
            | ActionPrimitive::Compress { grasp, .. } => vec![grasp],
            ActionPrimitive::DilateOpening { center, .. } => vec![center],
            ActionPrimitive::Fling { left, right } => vec![left, right],
            ActionPrimitive::PinPull { pin, pull } => vec![pin, pull],
            _ => Vec::new(),
        }
    }
}

fn on_bag(s: &BagState, p: Point2) -> bool {
    p.is_finite()
        && (s.footprint.contains(p) || s.footprint.boundary_distance(p) <= ON_BAG_TOLERANCE)
}

/// Crumples or spreads the bag to `ratio * a_max` keeping the frame origin.
fn rescale<R: Rng + ?Sized>(s: &mut BagState, ratio: f64, aspect: (f64, f64), rng: &mut R) {
    s.scale = split_scale(ratio, uniform(rng, aspect));
}

/// Applies one primitive and returns the successor state.
pub fn apply_primitive<R: Rng + ?Sized>(
    s: &BagState,
    a: &ActionPrimitive,
    params: &BagsimParams,
    rng: &mut R,
) -> Result<BagState, BagError> {
    for p in a.grasp_points() {
        if !params.workspace.contains(p) {
            return Err(BagError::OutOfWorkspace { x: p.x, y: p.y });
        }
        if !on_bag(s, p) {
            return Err(BagError::GraspOffBag { x: p.x, y: p.y });
        }
    }
    let mut n = s.clone();
    n.clock_s += params.primitive_duration_s;
    let ws = params.workspace;
    match *a {
        ActionPrimitive::Shake { .. } => {
            n.loosened = (n.loosened + uniform(rng, params.shake_loosen)).min(1.0);
            let ratio = n.loosened * uniform(rng, (0.95, 1.05));
            rescale(&mut n, ratio, (0.85, 1.18), rng);
            let turn = params.shake_turn_deg.to_radians();
            n.opening_dir = (n.opening_dir + uniform(rng, (-turn, turn))).rem_euclid(TAU);
            n.center = n.center
                + Point2::new(
                    normal(rng, 0.0, params.shake_shift_sd),
                    normal(rng, 0.0, params.shake_shift_sd),
                );
            n.upside = Upside::Side;
            n.opening.area_frac = uniform(rng, params.initial_opening);
            n.opening.aspect = uniform(rng, params.initial_opening_aspect);
            n.held_grasp = None;
            n.keep_in_workspace(&ws);
            n.set_opening(n.opening.area_frac, n.opening.aspect, params.opening_cap);
        }
        ActionPrimitive::Fold { grasp, d } => {
            let centroid = n.footprint.centroid();
            let mut u = centroid - grasp;
            if u.norm() < 1e-9 {
                u = -Point2::from_angle(n.opening_dir);
            }
            let u = u * (1.0 / u.norm());
            let before = n.footprint.area();
            let kept = n
                .footprint
                .clip_halfplane(u, u.dot(grasp) + d)
                .map_or(before, |p| p.area());
            if kept < before {
                let factor = (kept / before).max(1e-3);
                let along_x = Point2::from_angle(n.opening_dir - 0.5 * PI);
                let along_y = Point2::from_angle(n.opening_dir);
                let (hw, hl) = n.half_extents();
                if u.dot(along_x).abs() >= u.dot(along_y).abs() {
                    let removed = 2.0 * hw * (1.0 - factor);
                    let sign = u.dot(along_x).signum();
                    n.scale.0 *= factor;
                    n.center = n.center - along_x * (0.5 * removed * sign);
                } else {
                    let removed = 2.0 * hl * (1.0 - factor);
                    let sign = u.dot(along_y).signum();
                    n.scale.1 *= factor;
                    n.center = n.center - along_y * (0.5 * removed * sign);
                }
                n.set_opening(n.opening.area_frac, n.opening.aspect, params.opening_cap);
            }
        }
        ActionPrimitive::Compress { .. } => {
            if n.material.inflatable && !n.material.has_holes {
                let area = n.opening.area_frac + uniform(rng, params.compress_open);
                let aspect = (n.opening.aspect * uniform(rng, params.compress_aspect)).max(1.0);
                if rng.random::<f64>() < params.compress_up_prob {
                    n.upside = Upside::Up;
                }
                n.set_opening(area, aspect, params.opening_cap);
            }
        }
        ActionPrimitive::Flip { .. } => {
            let u: f64 = rng.random();
            n.upside = match n.upside {
                Upside::Down if u < params.flip_toggle_prob => Upside::Up,
                Upside::Up if u < params.flip_toggle_prob => Upside::Down,
                Upside::Side if u < 0.4 => Upside::Up,
                Upside::Side if u < 0.8 => Upside::Down,
                other => other,
            };
            n.opening_dir = rng.random_range(0.0..TAU);
            n.held_grasp = None;
            n.keep_in_workspace(&ws);
            n.rebuild();
        }
        ActionPrimitive::Rotate { angle, .. } => {
            let limit = 3.0 * params.rotate_noise_deg;
            let noise = normal(rng, 0.0, params.rotate_noise_deg).clamp(-limit, limit);
            let pivot = n.footprint.centroid();
            n.rotate_about(pivot, angle + noise.to_radians());
        }
        ActionPrimitive::DilateFlatten { .. } => {
            let grow = uniform(rng, params.dilate_flatten_gain) * n.a_max.sqrt();
            let (w, l) = (n.material.width, n.material.length);
            let (ex, ey) = (n.scale.0 * w, n.scale.1 * l);
            let grow_x = (ex <= ey && n.scale.0 < 1.0) || n.scale.1 >= 1.0;
            if grow_x {
                n.scale.0 = ((ex + grow) / w).min(1.0);
            } else {
                n.scale.1 = ((ey + grow) / l).min(1.0);
            }
            n.loosened = (n.loosened + params.dilate_flatten_loosen).min(1.0);
            n.keep_in_workspace(&ws);
            n.set_opening(n.opening.area_frac, n.opening.aspect, params.opening_cap);
        }
        ActionPrimitive::DilateOpening { center, .. } => {
            let e = center.distance(n.opening_poly.centroid());
            let (area, aspect) = if e <= params.dilate_tol_in {
                n.scale.0 = (n.scale.0 + params.dilate_scale_gain).min(1.0);
                n.scale.1 = (n.scale.1 + params.dilate_scale_gain).min(1.0);
                (
                    n.opening.area_frac + uniform(rng, params.dilate_open_gain),
                    n.opening.aspect * uniform(rng, params.dilate_open_aspect),
                )
            } else {
                (
                    (n.opening.area_frac - uniform(rng, params.dilate_open_loss)).max(0.01),
                    n.opening.aspect * uniform(rng, params.dilate_open_elongate),
                )
            };
            if rng.random::<f64>() < params.dilate_offcenter_prob {
                let dir = Point2::from_angle(rng.random_range(0.0..TAU));
                n.center = n.center + dir * params.dilate_offcenter_shift;
            }
            n.keep_in_workspace(&ws);
            n.set_opening(area, aspect, params.opening_cap);
        }
        ActionPrimitive::Fling { .. } => {
            let gain = if n.material.kind.is_fabric() {
                params.fling_fabric
            } else {
                params.fling_other
            };
            n.loosened = (n.loosened + uniform(rng, gain)).min(1.0);
            let ratio = n.loosened * uniform(rng, (0.95, 1.05));
            rescale(&mut n, ratio, (0.95, 1.05), rng);
            let turn = params.fling_turn_deg.to_radians();
            n.opening_dir = (n.opening_dir + uniform(rng, (-turn, turn))).rem_euclid(TAU);
            n.upside = Upside::Side;
            n.held_grasp = None;
            n.keep_in_workspace(&ws);
            n.set_opening(n.opening.area_frac, n.opening.aspect, params.opening_cap);
        }
        ActionPrimitive::Recenter => {
            let d = ws.center() - n.footprint.centroid();
            n.translate(d);
        }
        ActionPrimitive::PinPull { .. } => {}
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bagsim::MaterialPresets;
    use crate::geom::wrap_angle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(kind: &str, seed: u64) -> (BagState, BagsimParams) {
        let params = BagsimParams::default();
        let presets = MaterialPresets::default();
        let m = presets.get(kind.parse().unwrap()).clone();
        (BagState::from_seed(&m, &params, seed), params)
    }

    #[test]
    fn rotate_is_rigid() {
        for seed in 0..50 {
            let (s, params) = setup("thin_plastic", seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n =
                apply_primitive(&s, &ActionPrimitive::rotate(0.5 * PI), &params, &mut rng).unwrap();
            assert!((n.footprint.area() - s.footprint.area()).abs() <= 1e-9);
            let turned = wrap_angle(n.opening_dir - s.opening_dir - 0.5 * PI).abs();
            assert!(turned <= 9f64.to_radians() + 1e-12);
        }
    }

    #[test]
    fn recenter_moves_centroid_to_workspace_center() {
        let (s, params) = setup("handbag", 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = apply_primitive(&s, &ActionPrimitive::Recenter, &params, &mut rng).unwrap();
        assert!(n.footprint.centroid().distance(params.workspace.center()) < 1e-9);
        assert!((n.footprint.area() - s.footprint.area()).abs() <= 1e-9);
    }

    #[test]
    fn compress_on_drawstring_keeps_opening() {
        for seed in 0..100 {
            let (s, params) = setup("drawstring", seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grasp = s.footprint.centroid();
            let n =
                apply_primitive(&s, &ActionPrimitive::compress(grasp), &params, &mut rng).unwrap();
            assert_eq!(n.opening_poly.area(), s.opening_poly.area());
        }
    }

    #[test]
    fn compress_inflates_plastic_opening() {
        let (s, params) = setup("thin_plastic", 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let grasp = s.footprint.centroid();
        let n = apply_primitive(&s, &ActionPrimitive::compress(grasp), &params, &mut rng).unwrap();
        assert!(n.opening_poly.area() > s.opening_poly.area());
    }

    #[test]
    fn centred_dilate_opening_never_shrinks_opening() {
        let (mut s, params) = setup("thin_plastic", 6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        s.set_opening(0.1, 2.0, params.opening_cap);
        for _ in 0..5 {
            let c = s.opening_poly.centroid();
            let n = apply_primitive(
                &s,
                &ActionPrimitive::dilate_opening(c, 10.0, 0.02),
                &params,
                &mut rng,
            )
            .unwrap();
            assert!(n.opening_poly.area() >= s.opening_poly.area() - 1e-9);
            s = n;
        }
    }

    #[test]
    fn off_center_dilate_opening_shrinks_opening() {
        let (mut s, params) = setup("thin_plastic", 6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        s.set_opening(0.3, 1.5, params.opening_cap);
        let (hw, _) = s.half_extents();
        let c = s.to_world(Point2::new(0.8 * hw, 0.0));
        let n = apply_primitive(
            &s,
            &ActionPrimitive::dilate_opening(c, 10.0, 0.02),
            &params,
            &mut rng,
        )
        .unwrap();
        assert!(n.opening_poly.area() < s.opening_poly.area());
    }

    #[test]
    fn fold_never_increases_area() {
        for seed in 0..50 {
            let (s, params) = setup("thick_plastic", seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let grasp = s.footprint.vertices()[0].lerp(s.footprint.centroid(), 0.1);
            let n = apply_primitive(
                &s,
                &ActionPrimitive::Fold { grasp, d: 5.0 },
                &params,
                &mut rng,
            )
            .unwrap();
            assert!(n.footprint.area() <= s.footprint.area() + 1e-9);
            assert_eq!(n.loosened, s.loosened);
        }
    }

    #[test]
    fn grasp_off_bag_rejected() {
        let (s, params) = setup("thin_plastic", 0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let off = Point2::new(0.5, 0.5);
        let err = apply_primitive(&s, &ActionPrimitive::shake(off), &params, &mut rng).unwrap_err();
        assert!(matches!(err, BagError::GraspOffBag { .. }));
    }

    #[test]
    fn flip_toggles_down_to_up_mostly() {
        let (mut s, params) = setup("thin_plastic", 0);
        s.upside = Upside::Down;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ups = (0..4000)
            .filter(|_| {
                apply_primitive(&s, &ActionPrimitive::flip(), &params, &mut rng)
                    .unwrap()
                    .upside
                    == Upside::Up
            })
            .count();
        let rate = ups as f64 / 4000.0;
        assert!((rate - 0.8).abs() < 0.03, "{rate}");
    }

    #[test]
    fn loosening_primitives_are_monotone() {
        for seed in 0..50 {
            let (s, params) = setup("handbag", seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = s.footprint.centroid();
            for a in [
                ActionPrimitive::shake(c),
                ActionPrimitive::Fling { left: c, right: c },
                ActionPrimitive::DilateFlatten { axis: 0.0 },
            ] {
                let n = apply_primitive(&s, &a, &params, &mut rng).unwrap();
                assert!(n.loosened >= s.loosened);
                n.check_invariants().unwrap();
            }
        }
    }
}
