//! Synthetic observations of a bag and the perception quantities derived
//! from them: area ratio, rim convex hull, grasp points and depth heuristics.

mod depth;
mod grasp_points;
pub mod pgm;

pub use depth::{depth_heuristics, perceived_grasp_height, sobel_magnitude, DepthHeuristic};
pub use grasp_points::{select_grasp_point, GraspMode, GraspTarget};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bagsim::{normal, BagState, MaterialKind, PerMaterial, FORWARD_AXIS};
use crate::geom::{
    convex_hull, elongation, mean_point, rasterize_unchecked, wrap_angle, Point2, Raster,
};

/// Radius of a rendered handle blob (cm).
const HANDLE_RADIUS: f64 = 2.5;
/// Fraction of pixels that see through holes in mesh materials.
const HOLE_PIXEL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerceptError {
    #[error("no bag pixels in the observation")]
    NoBagVisible,
    #[error("grasp mode {0} has no usable pixels")]
    ModeUnavailable(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum PixelClass {
    Background = 0,
    Bag = 1,
    Rim = 2,
    Handle = 3,
}

impl PixelClass {
    pub fn is_bag(self) -> bool {
        self != PixelClass::Background
    }
}

/// Error model of the segmenter and depth camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionNoise {
    /// Fraction of the true rim that is segmented (missed rim = Type-2).
    pub rim_recall: f64,
    /// Fraction of plain bag pixels wrongly labelled rim (Type-1).
    pub rim_spurious: f64,
    pub handle_visible_prob: f64,
    /// Signed depth error in mm; positive reads the surface as deeper.
    pub depth_bias: f64,
    pub depth_sd: f64,
    /// Extra perceived depth where the camera sees through holes.
    pub hole_depth_overshoot: f64,
}

impl PerceptionNoise {
    /// Perfect sensing.
    pub fn zero() -> Self {
        Self {
            rim_recall: 1.0,
            rim_spurious: 0.0,
            handle_visible_prob: 1.0,
            depth_bias: 0.0,
            depth_sd: 0.0,
            hole_depth_overshoot: 0.0,
        }
    }

    pub fn for_material(kind: MaterialKind) -> Self {
        let base = Self {
            rim_recall: 0.8,
            rim_spurious: 0.0,
            handle_visible_prob: 0.7,
            depth_bias: -1.0,
            depth_sd: 1.0,
            hole_depth_overshoot: 0.0,
        };
        match kind {
            MaterialKind::ThinPlastic | MaterialKind::ThickPlastic => base,
            MaterialKind::Drawstring => Self {
                rim_recall: 0.85,
                depth_bias: 6.5,
                hole_depth_overshoot: 4.0,
                ..base
            },
            _ => Self {
                rim_recall: 0.85,
                ..base
            },
        }
    }

    /// Degraded segmentation on a bag outside the training set.
    pub fn unseen(self) -> Self {
        Self {
            rim_recall: 0.6,
            rim_spurious: 0.002,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("rim_recall", self.rim_recall),
            ("rim_spurious", self.rim_spurious),
            ("handle_visible_prob", self.handle_visible_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.depth_sd >= 0.0 && self.depth_sd.is_finite()) {
            return Err("depth_sd must be non-negative".into());
        }
        if !(self.depth_bias.is_finite() && self.hole_depth_overshoot.is_finite()) {
            return Err("depth offsets must be finite".into());
        }
        Ok(())
    }
}

impl Default for PerMaterial<PerceptionNoise> {
    fn default() -> Self {
        PerMaterial::from_fn(PerceptionNoise::for_material)
    }
}

/// Segmented top-down view. `depth` holds the perceived surface height above
/// the table in mm (0 on background), row-major like the class grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub raster: Raster,
    pub classes: Vec<PixelClass>,
    pub depth: Vec<f64>,
    pub timestamp: f64,
}

impl Observation {
    pub fn blank(raster: Raster) -> Self {
        Self {
            raster,
            classes: vec![PixelClass::Background; raster.len()],
            depth: vec![0.0; raster.len()],
            timestamp: 0.0,
        }
    }

    pub fn width(&self) -> usize {
        self.raster.width
    }

    pub fn height(&self) -> usize {
        self.raster.height
    }

    pub fn class_at(&self, i: usize, j: usize) -> PixelClass {
        self.classes[self.raster.index(i, j)]
    }

    pub fn depth_at(&self, i: usize, j: usize) -> f64 {
        self.depth[self.raster.index(i, j)]
    }

    /// Flat indices of pixels with the given class.
    pub fn pixels_of(&self, class: PixelClass) -> Vec<usize> {
        (0..self.classes.len())
            .filter(|&k| self.classes[k] == class)
            .collect()
    }

    /// Flat indices of all non-background pixels.
    pub fn bag_pixels(&self) -> Vec<usize> {
        (0..self.classes.len())
            .filter(|&k| self.classes[k].is_bag())
            .collect()
    }

    pub fn center_of(&self, idx: usize) -> Point2 {
        let (i, j) = self.raster.coords(idx);
        self.raster.pixel_center(i, j)
    }

    pub fn is_bag_at(&self, p: Point2) -> bool {
        self.raster
            .pixel_of(p)
            .is_some_and(|(i, j)| self.class_at(i, j).is_bag())
    }
}

/// Perception summary consumed by the policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpeningMetrics {
    /// Visible bag area over the fully flattened area.
    pub s: f64,
    /// Rim convex-hull area over the fully flattened area.
    pub a_ch: f64,
    /// Elongation of the rim point set; infinite with fewer than 3 rim pixels.
    pub e_ch: f64,
    /// Heading of (rim centroid - bag centroid) relative to the forward axis.
    pub opening_angle: Option<f64>,
    /// Distance between rim centroid and bag centroid (0 without rim).
    pub rim_offset: f64,
}

/// Pixels touched by a polyline sampled densely enough for the grid.
fn stamp_points(raster: &Raster, points: &[Point2], out: &mut [bool]) {
    for &p in points {
        if let Some((i, j)) = raster.pixel_of(p) {
            out[raster.index(i, j)] = true;
        }
    }
}

/// 8-neighbour dilation by one pixel.
pub(crate) fn dilate(width: usize, height: usize, mask: &[bool]) -> Vec<bool> {
    let mut out = mask.to_vec();
    for j in 0..height {
        for i in 0..width {
            if !mask[j * width + i] {
                continue;
            }
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni >= 0 && nj >= 0 && (ni as usize) < width && (nj as usize) < height {
                        out[nj as usize * width + ni as usize] = true;
                    }
                }
            }
        }
    }
    out
}

/// Visible part of the true rim: a contiguous run covering `recall` of the
/// sample points (wrapping for a closed rim).
pub fn visible_rim_arc<R: Rng + ?Sized>(
    rim: &[Point2],
    closed: bool,
    recall: f64,
    rng: &mut R,
) -> Vec<Point2> {
    let n = rim.len();
    if n == 0 || recall <= 0.0 {
        return Vec::new();
    }
    let k = ((recall * n as f64).round() as usize).clamp(1, n);
    if k == n {
        return rim.to_vec();
    }
    if closed {
        let start = rng.random_range(0..n);
        (0..k).map(|t| rim[(start + t) % n]).collect()
    } else {
        let start = rng.random_range(0..=n - k);
        rim[start..start + k].to_vec()
    }
}

/// Renders a noisy segmentation and depth image of the bag.
pub fn render_observation<R: Rng + ?Sized>(
    s: &BagState,
    raster: &Raster,
    noise: &PerceptionNoise,
    rng: &mut R,
) -> Observation {
    let mut obs = Observation::blank(*raster);
    obs.timestamp = s.clock_s;
    let bag = rasterize_unchecked(&s.footprint, raster);
    let bag = bag.as_slice();
    for (k, &b) in bag.iter().enumerate() {
        if b {
            obs.classes[k] = PixelClass::Bag;
        }
    }

    if s.rim_visible() {
        let arc = visible_rim_arc(&s.rim_arc, s.rim_closed, noise.rim_recall, rng);
        let mut rim = vec![false; raster.len()];
        stamp_points(raster, &arc, &mut rim);
        let rim = dilate(raster.width, raster.height, &rim);
        for (k, &r) in rim.iter().enumerate() {
            if r && bag[k] {
                obs.classes[k] = PixelClass::Rim;
            }
        }
    }
    if noise.rim_spurious > 0.0 {
        for k in 0..raster.len() {
            if obs.classes[k] == PixelClass::Bag && rng.random::<f64>() < noise.rim_spurious {
                obs.classes[k] = PixelClass::Rim;
            }
        }
    }

    for h in &s.handles {
        if !h.visible || rng.random::<f64>() >= noise.handle_visible_prob {
            continue;
        }
        let (dx, dy) = raster.pixel_size();
        let (ri, rj) = (
            (HANDLE_RADIUS / dx).ceil() as i64,
            (HANDLE_RADIUS / dy).ceil() as i64,
        );
        let Some((ci, cj)) = raster.pixel_of(h.center) else {
            continue;
        };
        for j in (cj as i64 - rj)..=(cj as i64 + rj) {
            for i in (ci as i64 - ri)..=(ci as i64 + ri) {
                if i < 0 || j < 0 || i >= raster.width as i64 || j >= raster.height as i64 {
                    continue;
                }
                let k = raster.index(i as usize, j as usize);
                if bag[k]
                    && raster
                        .pixel_center(i as usize, j as usize)
                        .distance(h.center)
                        <= HANDLE_RADIUS
                {
                    obs.classes[k] = PixelClass::Handle;
                }
            }
        }
    }

    let holes = s.material.has_holes && noise.hole_depth_overshoot != 0.0;
    let heights = s.surface_height_field(raster, bag);
    for (k, &b) in bag.iter().enumerate() {
        if !b {
            continue;
        }
        let mut d = heights[k] - noise.depth_bias;
        if noise.depth_sd > 0.0 {
            d = normal(rng, d, noise.depth_sd);
        }
        if holes && rng.random::<f64>() < HOLE_PIXEL_FRACTION {
            d -= noise.hole_depth_overshoot;
        }
        obs.depth[k] = d;
    }
    obs
}

/// Computes area ratio, rim hull area, rim elongation and opening heading.
pub fn opening_metrics(o: &Observation, a_max: f64) -> Result<OpeningMetrics, PerceptError> {
    let bag = o.bag_pixels();
    if bag.is_empty() {
        return Err(PerceptError::NoBagVisible);
    }
    let s = bag.len() as f64 * o.raster.pixel_area() / a_max;
    let rim = o.pixels_of(PixelClass::Rim);
    let bag_centroid = mean_point(&bag.iter().map(|&k| o.center_of(k)).collect::<Vec<_>>());
    let rim_centers: Vec<Point2> = rim.iter().map(|&k| o.center_of(k)).collect();
    let (opening_angle, rim_offset) = match (mean_point(&rim_centers), bag_centroid) {
        (Some(r), Some(b)) if r.distance(b) > 1e-12 => (
            Some(wrap_angle((r - b).angle() - FORWARD_AXIS)),
            r.distance(b),
        ),
        _ => (None, 0.0),
    };
    if rim.len() < 3 {
        return Ok(OpeningMetrics {
            s,
            a_ch: 0.0,
            e_ch: f64::INFINITY,
            opening_angle,
            rim_offset,
        });
    }
    // Only the outermost rim pixel at each end of a row can touch the hull.
    let mut rows: Vec<Option<(usize, usize)>> = vec![None; o.height()];
    for &k in &rim {
        let (i, j) = o.raster.coords(k);
        rows[j] = Some(match rows[j] {
            Some((lo, hi)) => (lo.min(i), hi.max(i)),
            None => (i, i),
        });
    }
    let corners: Vec<Point2> = rows
        .iter()
        .enumerate()
        .filter_map(|(j, r)| r.map(|(lo, hi)| (j, lo, hi)))
        .flat_map(|(j, lo, hi)| {
            let [a, b, c, d] = o.raster.pixel_corners(lo, j);
            let [e, f, g, h] = o.raster.pixel_corners(hi, j);
            [a, b, c, d, e, f, g, h]
        })
        .collect();
    let a_ch = convex_hull(&corners).map_or(0.0, |h| h.area() / a_max);
    let e_ch = elongation(&corners).unwrap_or(f64::INFINITY);
    Ok(OpeningMetrics {
        s,
        a_ch,
        e_ch,
        opening_angle,
        rim_offset,
    })
}
