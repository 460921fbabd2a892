use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Observation, PerceptError, PixelClass};
use crate::geom::{convex_hull, mean_point, min_area_rect, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspMode {
    UniformOnBag,
    UniformBoundary,
    HandleCenter,
    BottomCenter,
    BagCenter,
    LeftRightEndpoints,
    OpeningCenter,
    RimCenterForSlip,
    PinPullPoints,
}

impl GraspMode {
    pub fn name(self) -> &'static str {
        match self {
            GraspMode::UniformOnBag => "uniform_on_bag",
            GraspMode::UniformBoundary => "uniform_boundary",
            GraspMode::HandleCenter => "handle_center",
            GraspMode::BottomCenter => "bottom_center",
            GraspMode::BagCenter => "bag_center",
            GraspMode::LeftRightEndpoints => "left_right_endpoints",
            GraspMode::OpeningCenter => "opening_center",
            GraspMode::RimCenterForSlip => "rim_center_for_slip",
            GraspMode::PinPullPoints => "pin_pull_points",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GraspTarget {
    Point(Point2),
    Pair(Point2, Point2),
}

impl GraspTarget {
    /// The single point, or the midpoint of a pair.
    pub fn point(self) -> Point2 {
        match self {
            GraspTarget::Point(p) => p,
            GraspTarget::Pair(a, b) => a.lerp(b, 0.5),
        }
    }

    pub fn pair(self) -> (Point2, Point2) {
        match self {
            GraspTarget::Point(p) => (p, p),
            GraspTarget::Pair(a, b) => (a, b),
        }
    }
}

/// Nearest bag pixel center to `p`, or `p` itself if it is on the bag.
fn snap_to_bag(o: &Observation, bag: &[usize], p: Point2) -> Point2 {
    if o.is_bag_at(p) {
        return p;
    }
    bag.iter()
        .map(|&k| o.center_of(k))
        .min_by(|a, b| a.distance(p).total_cmp(&b.distance(p)))
        .unwrap_or(p)
}

/// 4-connected components of the pixels flagged in `mask`, in scan order.
fn components(width: usize, height: usize, mask: &[bool]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; mask.len()];
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut comp = Vec::new();
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            comp.push(k);
            let (i, j) = (k % width, k / width);
            let mut push = |n: usize| {
                if mask[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if i > 0 {
                push(k - 1);
            }
            if i + 1 < width {
                push(k + 1);
            }
            if j > 0 {
                push(k - width);
            }
            if j + 1 < height {
                push(k + width);
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn boundary_pixels(o: &Observation, bag: &[usize]) -> Vec<usize> {
    let (w, h) = (o.width(), o.height());
    bag.iter()
        .copied()
        .filter(|&k| {
            let (i, j) = (k % w, k / w);
            i == 0
                || j == 0
                || i + 1 == w
                || j + 1 == h
                || !o.classes[k - 1].is_bag()
                || !o.classes[k + 1].is_bag()
                || !o.classes[k - w].is_bag()
                || !o.classes[k + w].is_bag()
        })
        .collect()
}

fn handle_centers(o: &Observation, bag: &[usize]) -> Vec<Point2> {
    let mask: Vec<bool> = o.classes.iter().map(|&c| c == PixelClass::Handle).collect();
    components(o.width(), o.height(), &mask)
        .into_iter()
        .filter_map(|c| mean_point(&c.iter().map(|&k| o.center_of(k)).collect::<Vec<_>>()))
        .map(|p| snap_to_bag(o, bag, p))
        .collect()
}

fn left_right(o: &Observation, bag: &[usize]) -> (Point2, Point2) {
    let centers: Vec<Point2> = bag.iter().map(|&k| o.center_of(k)).collect();
    let c = mean_point(&centers).expect("non-empty bag");
    let row = o
        .raster
        .pixel_of(c)
        .map(|(_, j)| j)
        .filter(|&j| (0..o.width()).any(|i| o.class_at(i, j).is_bag()))
        .unwrap_or_else(|| o.raster.coords(bag[bag.len() / 2]).1);
    let cols: Vec<usize> = (0..o.width())
        .filter(|&i| o.class_at(i, row).is_bag())
        .collect();
    let (lo, hi) = (cols[0], cols[cols.len() - 1]);
    (
        o.raster.pixel_center(lo, row),
        o.raster.pixel_center(hi, row),
    )
}

fn pick<R: Rng + ?Sized>(o: &Observation, pixels: &[usize], rng: &mut R) -> Point2 {
    o.center_of(pixels[rng.random_range(0..pixels.len())])
}

/// Chooses a grasp point (or pair) with one of the fixed heuristics.
pub fn select_grasp_point<R: Rng + ?Sized>(
    o: &Observation,
    mode: GraspMode,
    rng: &mut R,
) -> Result<GraspTarget, PerceptError> {
    let bag = o.bag_pixels();
    if bag.is_empty() {
        return Err(PerceptError::NoBagVisible);
    }
    let rim = o.pixels_of(PixelClass::Rim);
    let rim_centers: Vec<Point2> = rim.iter().map(|&k| o.center_of(k)).collect();
    let target = match mode {
        GraspMode::UniformOnBag => GraspTarget::Point(pick(o, &bag, rng)),
        GraspMode::UniformBoundary => GraspTarget::Point(pick(o, &boundary_pixels(o, &bag), rng)),
        GraspMode::HandleCenter => {
            let handles = handle_centers(o, &bag);
            if handles.is_empty() {
                GraspTarget::Point(pick(o, &boundary_pixels(o, &bag), rng))
            } else {
                GraspTarget::Point(handles[rng.random_range(0..handles.len())])
            }
        }
        GraspMode::BagCenter => {
            let centers: Vec<Point2> = bag.iter().map(|&k| o.center_of(k)).collect();
            let c = mean_point(&centers).expect("non-empty bag");
            GraspTarget::Point(snap_to_bag(o, &bag, c))
        }
        GraspMode::BottomCenter => {
            if rim_centers.is_empty() {
                return Err(PerceptError::ModeUnavailable(mode.name()));
            }
            let centers: Vec<Point2> = bag.iter().map(|&k| o.center_of(k)).collect();
            let center = mean_point(&centers).expect("non-empty bag");
            let rect =
                min_area_rect(&centers).map_err(|_| PerceptError::ModeUnavailable(mode.name()))?;
            let rim_dist = |p: Point2| {
                rim_centers
                    .iter()
                    .map(|r| r.distance(p))
                    .fold(f64::INFINITY, f64::min)
            };
            let mut corners: Vec<(f64, Point2)> =
                rect.corners().iter().map(|&c| (rim_dist(c), c)).collect();
            corners.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mid = corners[0].1.lerp(corners[1].1, 0.5);
            let mut p = mid;
            let mut t = 0.0;
            while !o.is_bag_at(p) && t < 1.0 {
                t += 0.02;
                p = mid.lerp(center, t);
            }
            GraspTarget::Point(snap_to_bag(o, &bag, p))
        }
        GraspMode::LeftRightEndpoints => {
            let (l, r) = left_right(o, &bag);
            GraspTarget::Pair(l, r)
        }
        GraspMode::OpeningCenter => {
            if rim_centers.is_empty() {
                return Err(PerceptError::ModeUnavailable(mode.name()));
            }
            let c = convex_hull(&rim_centers)
                .map(|h| h.centroid())
                .unwrap_or_else(|_| mean_point(&rim_centers).expect("non-empty rim"));
            GraspTarget::Point(snap_to_bag(o, &bag, c))
        }
        GraspMode::RimCenterForSlip => {
            let Some(c) = mean_point(&rim_centers) else {
                return Err(PerceptError::ModeUnavailable(mode.name()));
            };
            let p = rim_centers
                .iter()
                .copied()
                .min_by(|a, b| a.distance(c).total_cmp(&b.distance(c)))
                .expect("non-empty rim");
            GraspTarget::Point(p)
        }
        GraspMode::PinPullPoints => {
            let handles = handle_centers(o, &bag);
            if handles.len() >= 2 {
                GraspTarget::Pair(handles[0], handles[1])
            } else {
                let (l, r) = left_right(o, &bag);
                GraspTarget::Pair(l, r)
            }
        }
    };
    Ok(target)
}
