//! Latent bag state and the stochastic effect models of the manipulation
//! primitives.
//!
//! The bag is modelled as a flat chamfered rectangle in a local frame whose
//! +y axis points out of the opening. Crumpling scales the two local axes;
//! rigid actions move the frame. Footprint, rim, handles and opening polygon
//! are always rebuilt from `(center, opening_dir, scale)` so they stay
//! consistent with each other.

mod grasp;
mod primitives;

pub use grasp::{
    attempt_grasp, execute_cyclic_trajectory, insert_objects, lift_bag, GraspOutcome, InsertVia,
    InteractionTrace, Layers,
};
pub use primitives::{apply_primitive, ActionPrimitive};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{OrientedRect, Point2, Polygon, Raster};

/// Robot forward axis in world coordinates (radians).
pub const FORWARD_AXIS: f64 = 0.0;
/// Direction a bag opening should face for sideways insertion.
pub const LATERAL_AXIS: f64 = 0.5 * PI;

const CHAMFER: f64 = 0.15;
const RIM_INSET: f64 = 1.0;
const RIM_SPACING: f64 = 0.25;
const OPENING_VERTICES: usize = 48;
const UP_WALL_HEIGHT: f64 = 40.0;
const UP_FLOOR_HEIGHT: f64 = 12.0;
const UP_FOLD_GAIN: f64 = 8.0;
/// Width over which an upright bag's wall rises from the table (cm).
const UP_WALL_RAMP: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BagError {
    #[error("grasp point ({x:.2}, {y:.2}) is not on the bag")]
    GraspOffBag { x: f64, y: f64 },
    #[error("point ({x:.2}, {y:.2}) is outside the workspace")]
    OutOfWorkspace { x: f64, y: f64 },
    #[error("side insertion needs a held single-layer grasp")]
    NoGraspHeld,
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialKind {
    ThinPlastic,
    ThickPlastic,
    Drawstring,
    #[serde(rename = "handbag")]
    HandBag,
    FoldedCloth,
    Dress,
    Hat,
}

impl MaterialKind {
    pub const BAGS: [MaterialKind; 4] = [
        MaterialKind::ThinPlastic,
        MaterialKind::ThickPlastic,
        MaterialKind::Drawstring,
        MaterialKind::HandBag,
    ];

    pub const ALL: [MaterialKind; 7] = [
        MaterialKind::ThinPlastic,
        MaterialKind::ThickPlastic,
        MaterialKind::Drawstring,
        MaterialKind::HandBag,
        MaterialKind::FoldedCloth,
        MaterialKind::Dress,
        MaterialKind::Hat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaterialKind::ThinPlastic => "thin_plastic",
            MaterialKind::ThickPlastic => "thick_plastic",
            MaterialKind::Drawstring => "drawstring",
            MaterialKind::HandBag => "handbag",
            MaterialKind::FoldedCloth => "folded_cloth",
            MaterialKind::Dress => "dress",
            MaterialKind::Hat => "hat",
        }
    }

    pub fn is_plastic(self) -> bool {
        matches!(self, MaterialKind::ThinPlastic | MaterialKind::ThickPlastic)
    }

    pub fn is_fabric(self) -> bool {
        !self.is_plastic()
    }
}

impl fmt::Display for MaterialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaterialKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MaterialKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown material `{s}`"))
    }
}

/// Physical parameters of one bag (or garment) category. Heights in mm,
/// sizes in cm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub kind: MaterialKind,
    pub has_holes: bool,
    pub has_handles: bool,
    pub inflatable: bool,
    pub stiffness: f64,
    pub slip_1layer_prob: f64,
    pub layer_gap_mean: f64,
    pub layer_gap_sd: f64,
    pub z_bot_mean: f64,
    pub z_bot_sd: f64,
    /// Standard deviation of the spatial surface-height field.
    pub wrinkle_sd: f64,
    pub width: f64,
    pub length: f64,
}

impl Material {
    pub fn validate(&self) -> Result<(), BagError> {
        let bad = |what: &str| Err(BagError::InvalidMaterial(format!("{}: {what}", self.kind)));
        for (name, p) in [
            ("stiffness", self.stiffness),
            ("slip_1layer_prob", self.slip_1layer_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        for (name, v) in [
            ("layer_gap_mean", self.layer_gap_mean),
            ("layer_gap_sd", self.layer_gap_sd),
            ("z_bot_mean", self.z_bot_mean),
            ("z_bot_sd", self.z_bot_sd),
            ("width", self.width),
            ("length", self.length),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.wrinkle_sd >= 0.0 && self.wrinkle_sd.is_finite()) {
            return bad("wrinkle_sd must be non-negative");
        }
        Ok(())
    }

    /// Area of the fully flattened bag.
    pub fn a_max(&self) -> f64 {
        self.width * self.length * (1.0 - 0.5 * CHAMFER * CHAMFER)
    }

    /// Expected height of the top surface on a flat bag.
    pub fn surface_height(&self) -> f64 {
        self.z_bot_mean + self.layer_gap_mean
    }

    /// Expected midpoint between the two layers on a flat bag.
    pub fn layer_midpoint(&self) -> f64 {
        self.z_bot_mean + 0.5 * self.layer_gap_mean
    }
}

/// One value per material category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerMaterial<T> {
    pub thin_plastic: T,
    pub thick_plastic: T,
    pub drawstring: T,
    pub handbag: T,
    pub folded_cloth: T,
    pub dress: T,
    pub hat: T,
}

impl<T> PerMaterial<T> {
    pub fn from_fn(f: impl Fn(MaterialKind) -> T) -> Self {
        Self {
            thin_plastic: f(MaterialKind::ThinPlastic),
            thick_plastic: f(MaterialKind::ThickPlastic),
            drawstring: f(MaterialKind::Drawstring),
            handbag: f(MaterialKind::HandBag),
            folded_cloth: f(MaterialKind::FoldedCloth),
            dress: f(MaterialKind::Dress),
            hat: f(MaterialKind::Hat),
        }
    }

    pub fn get(&self, kind: MaterialKind) -> &T {
        match kind {
            MaterialKind::ThinPlastic => &self.thin_plastic,
            MaterialKind::ThickPlastic => &self.thick_plastic,
            MaterialKind::Drawstring => &self.drawstring,
            MaterialKind::HandBag => &self.handbag,
            MaterialKind::FoldedCloth => &self.folded_cloth,
            MaterialKind::Dress => &self.dress,
            MaterialKind::Hat => &self.hat,
        }
    }

    pub fn get_mut(&mut self, kind: MaterialKind) -> &mut T {
        match kind {
            MaterialKind::ThinPlastic => &mut self.thin_plastic,
            MaterialKind::ThickPlastic => &mut self.thick_plastic,
            MaterialKind::Drawstring => &mut self.drawstring,
            MaterialKind::HandBag => &mut self.handbag,
            MaterialKind::FoldedCloth => &mut self.folded_cloth,
            MaterialKind::Dress => &mut self.dress,
            MaterialKind::Hat => &mut self.hat,
        }
    }
}

/// Built-in material presets, one per category.
pub type MaterialPresets = PerMaterial<Material>;

impl MaterialPresets {
    pub fn validate(&self) -> Result<(), BagError> {
        for kind in MaterialKind::ALL {
            let m = self.get(kind);
            if m.kind != kind {
                return Err(BagError::InvalidMaterial(format!(
                    "preset `{kind}` declares kind `{}`",
                    m.kind
                )));
            }
            m.validate()?;
        }
        Ok(())
    }
}

impl Default for MaterialPresets {
    fn default() -> Self {
        let base = |kind| Material {
            kind,
            has_holes: false,
            has_handles: true,
            inflatable: false,
            stiffness: 0.5,
            slip_1layer_prob: 0.1,
            layer_gap_mean: 3.0,
            layer_gap_sd: 0.5,
            z_bot_mean: 3.0,
            z_bot_sd: 0.5,
            wrinkle_sd: 1.2,
            width: 34.0,
            length: 40.0,
        };
        Self {
            thin_plastic: Material {
                inflatable: true,
                stiffness: 0.2,
                layer_gap_mean: 3.0,
                width: 32.0,
                length: 38.0,
                ..base(MaterialKind::ThinPlastic)
            },
            thick_plastic: Material {
                inflatable: true,
                stiffness: 0.8,
                layer_gap_mean: 4.0,
                z_bot_mean: 3.5,
                width: 34.0,
                length: 40.0,
                ..base(MaterialKind::ThickPlastic)
            },
            drawstring: Material {
                has_holes: true,
                has_handles: false,
                stiffness: 0.4,
                layer_gap_mean: 5.0,
                z_bot_mean: 3.5,
                width: 33.0,
                length: 40.0,
                ..base(MaterialKind::Drawstring)
            },
            handbag: Material {
                stiffness: 0.6,
                layer_gap_mean: 6.0,
                z_bot_mean: 3.5,
                width: 38.0,
                length: 40.0,
                ..base(MaterialKind::HandBag)
            },
            folded_cloth: Material {
                has_handles: false,
                stiffness: 0.3,
                layer_gap_mean: 2.0,
                z_bot_mean: 6.0,
                width: 30.0,
                length: 30.0,
                ..base(MaterialKind::FoldedCloth)
            },
            dress: Material {
                has_handles: false,
                stiffness: 0.3,
                layer_gap_mean: 2.5,
                z_bot_mean: 2.0,
                width: 40.0,
                length: 45.0,
                ..base(MaterialKind::Dress)
            },
            hat: Material {
                has_handles: false,
                stiffness: 0.3,
                layer_gap_mean: 3.0,
                z_bot_mean: 3.0,
                width: 28.0,
                length: 30.0,
                ..base(MaterialKind::Hat)
            },
        }
    }
}

/// Table area and camera grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Workspace {
    pub width: f64,
    pub height: f64,
    pub grid_w: usize,
    pub grid_h: usize,
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            width: 90.0,
            height: 60.0,
            grid_w: 128,
            grid_h: 128,
        }
    }
}

impl Workspace {
    pub fn center(&self) -> Point2 {
        Point2::new(0.5 * self.width, 0.5 * self.height)
    }

    pub fn rect(&self) -> OrientedRect {
        OrientedRect {
            center: self.center(),
            angle: 0.0,
            half_extents: (0.5 * self.width, 0.5 * self.height),
        }
    }

    pub fn raster(&self) -> Raster {
        Raster::new(self.grid_w, self.grid_h, self.rect())
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width && p.y <= self.height
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err("workspace dimensions must be positive".into());
        }
        if self.width < self.height {
            return Err("workspace width must not be smaller than its height".into());
        }
        if self.grid_w == 0 || self.grid_h == 0 || self.grid_w > 4096 || self.grid_h > 4096 {
            return Err("grid dimensions must lie in 1..=4096".into());
        }
        Ok(())
    }
}

/// Effect magnitudes of the primitives and the insertion / lifting models.
/// These are calibration constants, not measured quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BagsimParams {
    pub workspace: Workspace,
    pub initial_loosened: (f64, f64),
    pub initial_up_prob: f64,
    pub initial_down_prob: f64,
    pub initial_opening: (f64, f64),
    pub initial_opening_aspect: (f64, f64),
    pub initial_shift_sd: f64,
    pub shake_loosen: (f64, f64),
    pub shake_turn_deg: f64,
    pub shake_shift_sd: f64,
    pub compress_open: (f64, f64),
    pub compress_aspect: (f64, f64),
    pub compress_up_prob: f64,
    pub flip_toggle_prob: f64,
    pub rotate_noise_deg: f64,
    pub dilate_flatten_gain: (f64, f64),
    pub dilate_flatten_loosen: f64,
    pub dilate_open_gain: (f64, f64),
    pub dilate_open_aspect: (f64, f64),
    pub dilate_open_loss: (f64, f64),
    pub dilate_open_elongate: (f64, f64),
    pub dilate_scale_gain: f64,
    pub dilate_tol_in: f64,
    pub dilate_offcenter_prob: f64,
    pub dilate_offcenter_shift: f64,
    pub opening_cap: f64,
    pub fling_fabric: (f64, f64),
    pub fling_other: (f64, f64),
    pub fling_turn_deg: f64,
    pub traj_shift: f64,
    pub traj_rot_deg: f64,
    pub traj_loosen: f64,
    pub traj_duration_s: f64,
    pub traj_tilt_deg: f64,
    pub primitive_duration_s: f64,
    pub p_side_base: f64,
    pub side_misalign_penalty: f64,
    pub side_plastic_penalty: f64,
    pub side_align_tol_deg: f64,
    pub object_radius: f64,
    pub handle_occlude_prob: f64,
    pub lift_r_good: f64,
    pub lift_retain_prob: f64,
}

impl Default for BagsimParams {
    fn default() -> Self {
        Self {
            workspace: Workspace::default(),
            initial_loosened: (0.05, 0.4),
            initial_up_prob: 0.15,
            initial_down_prob: 0.25,
            initial_opening: (0.01, 0.05),
            initial_opening_aspect: (4.0, 8.0),
            initial_shift_sd: 3.0,
            shake_loosen: (0.1, 0.25),
            shake_turn_deg: 40.0,
            shake_shift_sd: 2.0,
            compress_open: (0.05, 0.15),
            compress_aspect: (0.7, 0.9),
            compress_up_prob: 0.7,
            flip_toggle_prob: 0.8,
            rotate_noise_deg: 3.0,
            dilate_flatten_gain: (0.05, 0.12),
            dilate_flatten_loosen: 0.05,
            dilate_open_gain: (0.08, 0.2),
            dilate_open_aspect: (0.75, 0.9),
            dilate_open_loss: (0.05, 0.15),
            dilate_open_elongate: (1.1, 1.4),
            dilate_scale_gain: 0.05,
            dilate_tol_in: 3.0,
            dilate_offcenter_prob: 0.15,
            dilate_offcenter_shift: 3.0,
            opening_cap: 0.6,
            fling_fabric: (0.2, 0.4),
            fling_other: (0.05, 0.1),
            fling_turn_deg: 15.0,
            traj_shift: 0.3,
            traj_rot_deg: 0.3,
            traj_loosen: 0.02,
            traj_duration_s: 5.0,
            traj_tilt_deg: 50.0,
            primitive_duration_s: 10.0,
            p_side_base: 0.95,
            side_misalign_penalty: 0.3,
            side_plastic_penalty: 0.08,
            side_align_tol_deg: 20.0,
            object_radius: 3.0,
            handle_occlude_prob: 0.15,
            lift_r_good: 8.0,
            lift_retain_prob: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upside {
    Up,
    Down,
    Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Handle {
    pub center: Point2,
    /// False once the handle is occluded (e.g. by inserted objects).
    pub visible: bool,
}

/// Latent opening: an ellipse centred on the bag frame origin with its major
/// axis along the bag's local x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpeningShape {
    /// Opening area as a fraction of `a_max`.
    pub area_frac: f64,
    /// Major / minor semi-axis ratio, `>= 1`.
    pub aspect: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct WrinkleWave {
    amp: f64,
    k: Point2,
    phase: f64,
}

/// Smooth random surface-height perturbation in the bag frame (mm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WrinkleField {
    waves: Vec<WrinkleWave>,
}

impl WrinkleField {
    pub fn flat() -> Self {
        Self { waves: Vec::new() }
    }

    pub fn random<R: Rng + ?Sized>(sd: f64, rng: &mut R) -> Self {
        const WAVES: usize = 3;
        let amp_sd = sd * (2.0 / WAVES as f64).sqrt();
        let waves = (0..WAVES)
            .map(|_| {
                let amp = amp_sd * rng.sample::<f64, _>(StandardNormal);
                let wavelength = rng.random_range(6.0..=20.0);
                let dir = Point2::from_angle(rng.random_range(0.0..2.0 * PI));
                WrinkleWave {
                    amp,
                    k: dir * (2.0 * PI / wavelength),
                    phase: rng.random_range(0.0..2.0 * PI),
                }
            })
            .collect();
        Self { waves }
    }

    pub fn value(&self, local: Point2) -> f64 {
        self.waves
            .iter()
            .map(|w| w.amp * (w.k.dot(local) + w.phase).sin())
            .sum()
    }
}

/// Forced `(z_bot, z_top)` layer heights in mm, bypassing the stochastic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerPair {
    pub z_bot: f64,
    pub z_top: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagState {
    pub material: Material,
    pub a_max: f64,
    pub loosened: f64,
    /// World position of the bag-frame origin.
    pub center: Point2,
    /// World heading of the opening (bag-frame +y axis).
    pub opening_dir: f64,
    /// Per-axis crumple scale `(sx, sy)`, each in `(0, 1]`.
    pub scale: (f64, f64),
    pub opening: OpeningShape,
    pub upside: Upside,
    pub objects_inside: u32,
    pub wrinkles: WrinkleField,
    pub forced_layers: Option<LayerPair>,
    /// Simulated seconds spent on the episode.
    pub clock_s: f64,
    /// Grasp currently held by the SLIP gripper.
    pub held_grasp: Option<GraspOutcome>,
    rim_wobble: [f64; 3],
    handle_visible: Vec<bool>,
    // derived geometry
    pub footprint: Polygon,
    pub rim_arc: Vec<Point2>,
    pub rim_closed: bool,
    pub handles: Vec<Handle>,
    pub opening_poly: Polygon,
}

pub(crate) fn uniform<R: Rng + ?Sized>(rng: &mut R, range: (f64, f64)) -> f64 {
    if range.1 <= range.0 {
        return range.0;
    }
    rng.random_range(range.0..=range.1)
}

pub(crate) fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    mean + sd * rng.sample::<f64, _>(StandardNormal)
}

/// Splits a target area ratio into per-axis scales, each capped at 1.
pub(crate) fn split_scale(ratio: f64, aspect: f64) -> (f64, f64) {
    let ratio = ratio.clamp(1e-3, 1.0);
    let root = ratio.sqrt();
    let mut sx = (root * aspect).min(1.0);
    let mut sy = (ratio / sx).min(1.0);
    sx = (ratio / sy).min(1.0);
    sy = sy.max(1e-3);
    (sx.max(1e-3), sy)
}

impl BagState {
    /// Fresh crumpled bag.
    pub fn new<R: Rng + ?Sized>(material: &Material, params: &BagsimParams, rng: &mut R) -> Self {
        let loosened = uniform(rng, params.initial_loosened);
        let ratio = loosened * uniform(rng, (0.95, 1.05));
        let scale = split_scale(ratio, uniform(rng, (0.85, 1.18)));
        let ws = params.workspace;
        let shift = Point2::new(
            normal(rng, 0.0, params.initial_shift_sd),
            normal(rng, 0.0, params.initial_shift_sd),
        );
        let opening_dir = rng.random_range(0.0..2.0 * PI);
        let u: f64 = rng.random();
        let upside = if u < params.initial_up_prob {
            Upside::Up
        } else if u < params.initial_up_prob + params.initial_down_prob {
            Upside::Down
        } else {
            Upside::Side
        };
        let opening = OpeningShape {
            area_frac: uniform(rng, params.initial_opening),
            aspect: uniform(rng, params.initial_opening_aspect),
        };
        let rim_wobble = [
            uniform(rng, (-0.4, 0.4)),
            uniform(rng, (-0.4, 0.4)),
            uniform(rng, (0.0, 2.0 * PI)),
        ];
        let wrinkles = WrinkleField::random(material.wrinkle_sd, rng);
        Self::assemble(
            material,
            loosened,
            ws.center() + shift,
            opening_dir,
            scale,
            opening,
            upside,
            wrinkles,
            rim_wobble,
            params,
        )
    }

    /// Deterministic constructor from a seed.
    pub fn from_seed(material: &Material, params: &BagsimParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new(material, params, &mut rng)
    }

    /// A bag already spread flat on the table with its opening near the
    /// forward axis, as produced by a successful flattening run.
    pub fn new_flat<R: Rng + ?Sized>(
        material: &Material,
        params: &BagsimParams,
        rng: &mut R,
    ) -> Self {
        let loosened = uniform(rng, (0.9, 1.0));
        let scale = split_scale(loosened, uniform(rng, (0.97, 1.03)));
        let opening_dir = FORWARD_AXIS + uniform(rng, (-10f64.to_radians(), 10f64.to_radians()));
        let opening = OpeningShape {
            area_frac: uniform(rng, params.initial_opening),
            aspect: uniform(rng, params.initial_opening_aspect),
        };
        let rim_wobble = [
            uniform(rng, (-0.4, 0.4)),
            uniform(rng, (-0.4, 0.4)),
            uniform(rng, (0.0, 2.0 * PI)),
        ];
        let wrinkles = WrinkleField::random(material.wrinkle_sd, rng);
        Self::assemble(
            material,
            loosened,
            params.workspace.center(),
            opening_dir,
            scale,
            opening,
            Upside::Side,
            wrinkles,
            rim_wobble,
            params,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        material: &Material,
        loosened: f64,
        center: Point2,
        opening_dir: f64,
        scale: (f64, f64),
        opening: OpeningShape,
        upside: Upside,
        wrinkles: WrinkleField,
        rim_wobble: [f64; 3],
        params: &BagsimParams,
    ) -> Self {
        let n_handles = if material.has_handles { 2 } else { 0 };
        let placeholder = Polygon::from_ccw_unchecked(vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
        ]);
        let mut s = Self {
            material: material.clone(),
            a_max: material.a_max(),
            loosened,
            center,
            opening_dir,
            scale,
            opening,
            upside,
            objects_inside: 0,
            wrinkles,
            forced_layers: None,
            clock_s: 0.0,
            held_grasp: None,
            rim_wobble,
            handle_visible: vec![true; n_handles],
            footprint: placeholder.clone(),
            rim_arc: Vec::new(),
            rim_closed: false,
            handles: Vec::new(),
            opening_poly: placeholder,
        };
        s.keep_in_workspace(&params.workspace);
        s.rebuild();
        s
    }

    fn frame_angle(&self) -> f64 {
        self.opening_dir - 0.5 * PI
    }

    pub fn to_world(&self, local: Point2) -> Point2 {
        self.center + local.rotate(self.frame_angle())
    }

    pub fn to_local(&self, world: Point2) -> Point2 {
        (world - self.center).rotate(-self.frame_angle())
    }

    /// Half extents of the current footprint along the bag's local axes.
    pub fn half_extents(&self) -> (f64, f64) {
        (
            0.5 * self.scale.0 * self.material.width,
            0.5 * self.scale.1 * self.material.length,
        )
    }

    pub fn area_ratio(&self) -> f64 {
        self.footprint.area() / self.a_max
    }

    pub fn opening_area_ratio(&self) -> f64 {
        self.opening_poly.area() / self.a_max
    }

    pub fn rim_centroid(&self) -> Point2 {
        crate::geom::mean_point(&self.rim_arc).unwrap_or(self.center)
    }

    pub fn rim_visible(&self) -> bool {
        self.upside != Upside::Down
    }

    pub fn set_handle_visible(&mut self, idx: usize, visible: bool) {
        if let Some(v) = self.handle_visible.get_mut(idx) {
            *v = visible;
        }
        if let Some(h) = self.handles.get_mut(idx) {
            h.visible = visible;
        }
    }

    /// True top-surface height (mm) at a world point on the bag.
    pub fn surface_height(&self, world: Point2) -> f64 {
        let local = self.to_local(world);
        let w = self.wrinkles.value(local);
        self.height_from_local(local, w, self.opening_axes(), || world)
    }

    fn height_from_local(
        &self,
        local: Point2,
        w: f64,
        (a, b): (f64, f64),
        world: impl FnOnce() -> Point2,
    ) -> f64 {
        match self.upside {
            Upside::Up => {
                if (local.x / a).powi(2) + (local.y / b).powi(2) <= 1.0 {
                    (UP_FLOOR_HEIGHT + UP_FOLD_GAIN * w).max(1.0)
                } else {
                    let ramp = if self.clear_of_edge(local, UP_WALL_RAMP) {
                        1.0
                    } else {
                        (self.footprint.boundary_distance(world()) / UP_WALL_RAMP).min(1.0)
                    };
                    (UP_WALL_HEIGHT + 3.0 * w) * ramp
                }
            }
            Upside::Down | Upside::Side => (self.material.surface_height() + w).max(0.2),
        }
    }

    /// Whether a bag-frame point lies at least `d` inside the chamfered
    /// footprint, with a small margin so the answer never disagrees with
    /// the exact boundary distance.
    fn clear_of_edge(&self, local: Point2, d: f64) -> bool {
        let (hw, hl) = self.half_extents();
        let (x, y) = (local.x.abs(), local.y.abs());
        let (cx, cy) = (CHAMFER * hw, CHAMFER * hl);
        let chamfer = (cy * (hw - cx - x) + cx * (hl - y)) / cx.hypot(cy);
        let d = d + 1e-6;
        hw - x >= d && hl - y >= d && chamfer >= d
    }

    /// Surface heights at the centers of the pixels flagged in `mask`, 0
    /// elsewhere. Agrees with [`BagState::surface_height`] up to rounding;
    /// the wrinkle waves are advanced along each row by angle addition.
    pub fn surface_height_field(&self, raster: &Raster, mask: &[bool]) -> Vec<f64> {
        let width = raster.width;
        let axes = self.opening_axes();
        let mut out = vec![0.0; raster.len()];
        let mut waves: Vec<[f64; 5]> = Vec::with_capacity(self.wrinkles.waves.len());
        for j in 0..raster.height {
            let row = &mask[j * width..(j + 1) * width];
            let Some(i0) = row.iter().position(|&b| b) else {
                continue;
            };
            let i1 = row.iter().rposition(|&b| b).unwrap_or(i0);
            let l0 = self.to_local(raster.pixel_center(i0, j));
            let dl = self.to_local(raster.pixel_center(i0 + 1, j)) - l0;
            waves.clear();
            waves.extend(self.wrinkles.waves.iter().map(|wv| {
                let (s, c) = (wv.k.dot(l0) + wv.phase).sin_cos();
                let (ds, dc) = wv.k.dot(dl).sin_cos();
                [wv.amp, s, c, ds, dc]
            }));
            for (t, i) in (i0..=i1).enumerate() {
                if row[i] {
                    let local = l0 + dl * t as f64;
                    let w: f64 = waves.iter().map(|v| v[0] * v[1]).sum();
                    out[j * width + i] =
                        self.height_from_local(local, w, axes, || raster.pixel_center(i, j));
                }
                for v in waves.iter_mut() {
                    let (s, c) = (v[1], v[2]);
                    v[1] = s * v[4] + c * v[3];
                    v[2] = c * v[4] - s * v[3];
                }
            }
        }
        out
    }

    /// Expected bottom-layer height (mm) at a world point.
    pub fn z_bot_mean_at(&self, world: Point2) -> f64 {
        self.material.z_bot_mean + self.wrinkles.value(self.to_local(world))
    }

    pub(crate) fn keep_in_workspace(&mut self, ws: &Workspace) {
        let (hw, hl) = self.half_extents();
        let r = hw.hypot(hl).min(0.5 * ws.height.min(ws.width));
        let margin_x = r.min(0.5 * ws.width);
        let margin_y = r.min(0.5 * ws.height);
        self.center.x = self.center.x.clamp(margin_x, ws.width - margin_x);
        self.center.y = self.center.y.clamp(margin_y, ws.height - margin_y);
    }

    /// Sets the opening ellipse, clamped to the footprint's local extents
    /// and the global cap.
    pub(crate) fn set_opening(&mut self, area_frac: f64, aspect: f64, cap: f64) {
        let aspect = aspect.max(1.0);
        let (hw, hl) = self.half_extents();
        let (amax, bmax) = (0.95 * hw, 0.95 * hl);
        let target = area_frac.clamp(0.005, cap) * self.a_max;
        let a0 = (target * aspect / PI).sqrt();
        let b0 = (target / (PI * aspect)).sqrt();
        let (a, b) = if a0 > amax {
            (amax, (target / (PI * amax)).min(bmax))
        } else if b0 > bmax {
            ((target / (PI * bmax)).min(amax), bmax)
        } else {
            (a0, b0)
        };
        self.opening = OpeningShape {
            area_frac: PI * a * b / self.a_max,
            aspect: a / b,
        };
        self.rebuild();
    }

    /// Semi-axes of the opening ellipse in the bag frame.
    pub fn opening_axes(&self) -> (f64, f64) {
        let (hw, hl) = self.half_extents();
        let area = self.opening.area_frac * self.a_max;
        let r = self.opening.aspect.max(1.0);
        let a = (area * r / PI).sqrt().min(0.95 * hw).max(1e-3);
        let b = (area / (PI * r)).sqrt().min(0.95 * hl).max(1e-3);
        (a, b)
    }

    /// Recomputes all derived geometry from the frame parameters.
    pub(crate) fn rebuild(&mut self) {
        let (hw, hl) = self.half_extents();
        let (cx, cy) = (CHAMFER * hw, CHAMFER * hl);
        let local = [
            Point2::new(-hw + cx, -hl),
            Point2::new(hw - cx, -hl),
            Point2::new(hw, -hl + cy),
            Point2::new(hw, hl - cy),
            Point2::new(hw - cx, hl),
            Point2::new(-hw + cx, hl),
            Point2::new(-hw, hl - cy),
            Point2::new(-hw, -hl + cy),
        ];
        self.footprint =
            Polygon::from_ccw_unchecked(local.iter().map(|&p| self.to_world(p)).collect());

        let (a, b) = self.opening_axes();
        let verts: Vec<Point2> = (0..OPENING_VERTICES)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / OPENING_VERTICES as f64;
                self.to_world(Point2::new(a * t.cos(), b * t.sin()))
            })
            .collect();
        self.opening_poly = Polygon::from_ccw_unchecked(verts);

        match self.upside {
            Upside::Up => {
                self.rim_closed = true;
                let perimeter = self
                    .opening_poly
                    .edges()
                    .map(|(p, q)| p.distance(q))
                    .sum::<f64>();
                let n = ((perimeter / RIM_SPACING).ceil() as usize).max(OPENING_VERTICES);
                self.rim_arc = (0..n)
                    .map(|k| {
                        let t = 2.0 * PI * k as f64 / n as f64;
                        self.to_world(Point2::new(a * t.cos(), b * t.sin()))
                    })
                    .collect();
            }
            Upside::Side | Upside::Down => {
                self.rim_closed = false;
                let half = 0.95 * (hw - cx);
                let y = hl - RIM_INSET;
                let n = ((2.0 * half / RIM_SPACING).ceil() as usize).max(2);
                let [w1, w2, phase] = self.rim_wobble;
                self.rim_arc = (0..=n)
                    .map(|k| {
                        let t = k as f64 / n as f64;
                        let x = -half + 2.0 * half * t;
                        let wob = (w1 * (PI * t + phase).sin() + w2 * (2.0 * PI * t + phase).sin())
                            .clamp(-0.5 * RIM_INSET, 0.5 * RIM_INSET);
                        self.to_world(Point2::new(x, y + wob))
                    })
                    .collect();
            }
        }

        self.handles = if self.material.has_handles {
            let (hx, hy) = if self.material.kind.is_plastic() {
                (0.6 * hw, hl - 2.5)
            } else {
                (0.25 * hw, hl - 3.5)
            };
            let hy = hy.max(-hl + 0.5);
            [Point2::new(-hx, hy), Point2::new(hx, hy)]
                .iter()
                .zip(&self.handle_visible)
                .map(|(&p, &visible)| Handle {
                    center: self.to_world(p),
                    visible,
                })
                .collect()
        } else {
            Vec::new()
        };
    }

    /// Rigid rotation of the whole bag about `pivot`.
    pub(crate) fn rotate_about(&mut self, pivot: Point2, angle: f64) {
        self.center = self.center.rotate_about(pivot, angle);
        self.opening_dir = (self.opening_dir + angle).rem_euclid(2.0 * PI);
        if let Some(g) = self.held_grasp.as_mut() {
            g.point = g.point.rotate_about(pivot, angle);
        }
        self.rebuild();
    }

    pub(crate) fn translate(&mut self, d: Point2) {
        self.center = self.center + d;
        if let Some(g) = self.held_grasp.as_mut() {
            g.point = g.point + d;
        }
        self.rebuild();
    }

    /// Checks the structural invariants of the state.
    pub fn check_invariants(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.loosened) {
            return Err(format!("loosened {} outside [0, 1]", self.loosened));
        }
        if self.footprint.area() > self.a_max * 1.02 {
            return Err("footprint exceeds 1.02 * a_max".into());
        }
        let (hw, hl) = self.half_extents();
        for &v in self.opening_poly.vertices() {
            let l = self.to_local(v);
            if l.x.abs() > hw + 1e-6 || l.y.abs() > hl + 1e-6 {
                return Err("opening leaves the footprint bounding box".into());
            }
        }
        Ok(())
    }
}
