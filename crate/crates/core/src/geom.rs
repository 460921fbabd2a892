//! Planar geometry kernel: convex hulls, minimum-area rectangles, polygon
//! predicates and scanline rasterization onto the workspace pixel grid.
//!
//! Coordinates are in centimetres. Polygons are stored counter-clockwise.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeomError {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(&'static str),
    #[error("polygon covers no pixel center")]
    EmptyRaster,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at `angle` radians from the +x axis.
    pub fn from_angle(angle: f64) -> Self {
        Self::new(angle.cos(), angle.sin())
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Self {
        if angle == 0.0 {
            return self;
        }
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn rotate_about(self, center: Self, angle: f64) -> Self {
        center + (self - center).rotate(angle)
    }

    pub fn lerp(self, other: Self, t: f64) -> Self {
        self + (other - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        Self::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Twice the signed area of triangle `abc`; positive when counter-clockwise.
pub fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

/// Mean of a point set. Returns `None` for an empty set.
pub fn mean_point(points: &[Point2]) -> Option<Point2> {
    if points.is_empty() {
        return None;
    }
    let sum = points.iter().fold(Point2::default(), |acc, &p| acc + p);
    Some(sum * (1.0 / points.len() as f64))
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let a = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a + 2.0 * PI
    } else {
        a
    }
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |a: Point2, b: Point2, c: Point2, d: f64| {
        d == 0.0
            && c.x >= a.x.min(b.x)
            && c.x <= a.x.max(b.x)
            && c.y >= a.y.min(b.y)
            && c.y <= a.y.max(b.y)
    };
    on(q1, q2, p1, d1) || on(q1, q2, p2, d2) || on(p1, p2, q1, d3) || on(p1, p2, q2, d4)
}

/// Simple polygon with counter-clockwise vertex order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<Point2>,
}

impl Polygon {
    /// Validates and normalizes a vertex ring. Clockwise input is reversed.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self, GeomError> {
        if vertices.len() < 3 {
            return Err(GeomError::InvalidPolygon("fewer than 3 vertices"));
        }
        if !vertices.iter().all(|p| p.is_finite()) {
            return Err(GeomError::InvalidPolygon("non-finite coordinate"));
        }
        let area = signed_area(&vertices);
        if area == 0.0 {
            return Err(GeomError::InvalidPolygon("zero area"));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let poly = Self { vertices };
        if !poly.is_simple() {
            return Err(GeomError::InvalidPolygon("self-intersecting"));
        }
        Ok(poly)
    }

    pub(crate) fn from_ccw_unchecked(vertices: Vec<Point2>) -> Self {
        debug_assert!(vertices.len() >= 3);
        Self { vertices }
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeomError> {
        Self::new(vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
        ])
    }

    /// Regular `n`-gon approximation of an ellipse with semi-axes `a` (along
    /// `angle`) and `b`.
    pub fn ellipse(
        center: Point2,
        a: f64,
        b: f64,
        angle: f64,
        n: usize,
    ) -> Result<Self, GeomError> {
        if !(a > 0.0 && b > 0.0) || n < 3 {
            return Err(GeomError::InvalidPolygon("degenerate ellipse"));
        }
        let verts = (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                center + Point2::new(a * t.cos(), b * t.sin()).rotate(angle)
            })
            .collect();
        Ok(Self::from_ccw_unchecked(verts))
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Area centroid.
    pub fn centroid(&self) -> Point2 {
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut a2 = 0.0;
        for (p, q) in self.edges() {
            let w = p.cross(q);
            a2 += w;
            cx += (p.x + q.x) * w;
            cy += (p.y + q.y) * w;
        }
        if a2.abs() < f64::EPSILON {
            return mean_point(&self.vertices).unwrap_or_default();
        }
        Point2::new(cx / (3.0 * a2), cy / (3.0 * a2))
    }

    /// Boundary-inclusive point-in-polygon test.
    pub fn contains(&self, p: Point2) -> bool {
        const EPS: f64 = 1e-9;
        let mut inside = false;
        for (a, b) in self.edges() {
            if point_segment_distance(p, a, b) <= EPS {
                return true;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Distance from `p` to the nearest edge.
    pub fn boundary_distance(&self, p: Point2) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a, b) = edges[i];
                let (c, d) = edges[j];
                if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    pub fn bounding_box(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    pub fn translate(&self, d: Point2) -> Self {
        Self::from_ccw_unchecked(self.vertices.iter().map(|&p| p + d).collect())
    }

    pub fn rotate_about(&self, center: Point2, angle: f64) -> Self {
        Self::from_ccw_unchecked(
            self.vertices
                .iter()
                .map(|&p| p.rotate_about(center, angle))
                .collect(),
        )
    }

    /// Keeps the part of the polygon with `normal . p <= offset`.
    /// Returns `None` when less than a sliver remains.
    pub fn clip_halfplane(&self, normal: Point2, offset: f64) -> Option<Self> {
        let inside = |p: Point2| normal.dot(p) <= offset;
        let mut out = Vec::with_capacity(self.vertices.len() + 2);
        for (a, b) in self.edges() {
            let (ia, ib) = (inside(a), inside(b));
            if ia {
                out.push(a);
            }
            if ia != ib {
                let da = normal.dot(a) - offset;
                let db = normal.dot(b) - offset;
                let t = da / (da - db);
                out.push(a.lerp(b, t));
            }
        }
        out.dedup_by(|a, b| a.distance(*b) < 1e-12);
        if out.len() >= 3 && out[0].distance(out[out.len() - 1]) < 1e-12 {
            out.pop();
        }
        if out.len() < 3 || signed_area(&out) <= 1e-12 {
            return None;
        }
        Some(Self::from_ccw_unchecked(out))
    }
}

fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    let mut s = 0.0;
    for i in 0..n {
        s += vertices[i].cross(vertices[(i + 1) % n]);
    }
    0.5 * s
}

/// Shoelace area of a valid polygon.
pub fn polygon_area(p: &Polygon) -> f64 {
    p.area()
}

/// Strictly convex hull (collinear points dropped), counter-clockwise and
/// starting from the lexicographically smallest vertex.
pub fn convex_hull(points: &[Point2]) -> Result<Polygon, GeomError> {
    if points.len() < 3 {
        return Err(GeomError::DegenerateInput("fewer than 3 points"));
    }
    if !points.iter().all(|p| p.is_finite()) {
        return Err(GeomError::DegenerateInput("non-finite point"));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(GeomError::DegenerateInput("fewer than 3 distinct points"));
    }

    let mut lower: Vec<Point2> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && orient(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && orient(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        return Err(GeomError::DegenerateInput("all points collinear"));
    }
    Ok(Polygon::from_ccw_unchecked(lower))
}

/// Rectangle with center, orientation of its long side and half extents
/// `(a, b)` where `a >= b > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Point2,
    pub angle: f64,
    pub half_extents: (f64, f64),
}

impl OrientedRect {
    pub fn new(center: Point2, angle: f64, a: f64, b: f64) -> Result<Self, GeomError> {
        if !(b > 0.0 && a >= b) || !center.is_finite() || !angle.is_finite() {
            return Err(GeomError::DegenerateInput("rectangle needs a >= b > 0"));
        }
        Ok(Self {
            center,
            angle,
            half_extents: (a, b),
        })
    }

    pub fn area(&self) -> f64 {
        4.0 * self.half_extents.0 * self.half_extents.1
    }

    pub fn aspect(&self) -> f64 {
        self.half_extents.0 / self.half_extents.1
    }

    /// Direction of the long side.
    pub fn major_axis(&self) -> Point2 {
        Point2::from_angle(self.angle)
    }

    pub fn to_local(&self, p: Point2) -> Point2 {
        (p - self.center).rotate(-self.angle)
    }

    pub fn to_world(&self, local: Point2) -> Point2 {
        self.center + local.rotate(self.angle)
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Point2; 4] {
        let (a, b) = self.half_extents;
        [
            self.to_world(Point2::new(-a, -b)),
            self.to_world(Point2::new(a, -b)),
            self.to_world(Point2::new(a, b)),
            self.to_world(Point2::new(-a, b)),
        ]
    }
}

fn normalize_half_turn(angle: f64) -> f64 {
    let a = angle.rem_euclid(PI);
    if PI - a < 1e-12 {
        0.0
    } else {
        a
    }
}

/// Minimum-area enclosing rectangle by rotating calipers over hull edges.
/// Equal-area candidates (every flush rectangle of a triangle, for one)
/// resolve to the smallest aspect, then the smallest angle in `[0, pi)`.
pub fn min_area_rect(points: &[Point2]) -> Result<OrientedRect, GeomError> {
    let hull = convex_hull(points)?;
    let verts = hull.vertices();
    let mut best: Option<(f64, OrientedRect)> = None;
    for (p, q) in hull.edges() {
        let dir = {
            let d = q - p;
            d * (1.0 / d.norm())
        };
        let normal = dir.perp();
        let (mut umin, mut umax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut vmin, mut vmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in verts {
            let u = v.dot(dir);
            let w = v.dot(normal);
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(w);
            vmax = vmax.max(w);
        }
        let (hu, hv) = (0.5 * (umax - umin), 0.5 * (vmax - vmin));
        let center = dir * (0.5 * (umin + umax)) + normal * (0.5 * (vmin + vmax));
        let (angle, a, b) = if hu >= hv {
            (dir.angle(), hu, hv)
        } else {
            (dir.angle() + 0.5 * PI, hv, hu)
        };
        let rect = OrientedRect {
            center,
            angle: normalize_half_turn(angle),
            half_extents: (a, b),
        };
        let area = rect.area();
        let better = match &best {
            None => true,
            Some((best_area, best_rect)) => {
                let tol = 1e-9 * best_area;
                let tie = (area - best_area).abs() <= tol;
                let (asp, best_asp) = (rect.aspect(), best_rect.aspect());
                area < best_area - tol
                    || (tie && asp < best_asp * (1.0 - 1e-9))
                    || (tie
                        && (asp - best_asp).abs() <= 1e-9 * best_asp
                        && rect.angle < best_rect.angle)
            }
        };
        if better {
            best = Some((area, rect));
        }
    }
    let (_, rect) = best.ok_or(GeomError::DegenerateInput("empty hull"))?;
    if rect.half_extents.1 <= 0.0 {
        return Err(GeomError::DegenerateInput("zero-width rectangle"));
    }
    Ok(rect)
}

/// Aspect ratio `a / b` of the minimum-area enclosing rectangle; always `>= 1`.
pub fn elongation(points: &[Point2]) -> Result<f64, GeomError> {
    min_area_rect(points).map(|r| r.aspect())
}

/// Pixel grid laid over an oriented workspace rectangle. Column `i` runs along
/// the workspace's local x axis, row `j` along its local y axis (row 0 at the
/// minimum local y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub workspace: OrientedRect,
}

impl Raster {
    pub fn new(width: usize, height: usize, workspace: OrientedRect) -> Self {
        assert!(width > 0 && height > 0, "raster needs at least one pixel");
        Self {
            width,
            height,
            workspace,
        }
    }

    /// Pixel pitch `(dx, dy)` in workspace units.
    pub fn pixel_size(&self) -> (f64, f64) {
        let (a, b) = self.workspace.half_extents;
        (2.0 * a / self.width as f64, 2.0 * b / self.height as f64)
    }

    pub fn pixel_area(&self) -> f64 {
        let (dx, dy) = self.pixel_size();
        dx * dy
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    fn local_of(&self, p: Point2) -> Point2 {
        let (a, b) = self.workspace.half_extents;
        self.workspace.to_local(p) + Point2::new(a, b)
    }

    fn world_of(&self, local: Point2) -> Point2 {
        let (a, b) = self.workspace.half_extents;
        self.workspace.to_world(local - Point2::new(a, b))
    }

    pub fn pixel_center(&self, i: usize, j: usize) -> Point2 {
        let (dx, dy) = self.pixel_size();
        self.world_of(Point2::new((i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy))
    }

    pub fn pixel_corners(&self, i: usize, j: usize) -> [Point2; 4] {
        let (dx, dy) = self.pixel_size();
        let (x0, y0) = (i as f64 * dx, j as f64 * dy);
        [
            self.world_of(Point2::new(x0, y0)),
            self.world_of(Point2::new(x0 + dx, y0)),
            self.world_of(Point2::new(x0 + dx, y0 + dy)),
            self.world_of(Point2::new(x0, y0 + dy)),
        ]
    }

    /// Pixel containing `p`, if inside the grid.
    pub fn pixel_of(&self, p: Point2) -> Option<(usize, usize)> {
        let (dx, dy) = self.pixel_size();
        let l = self.local_of(p);
        let fi = (l.x / dx).floor();
        let fj = (l.y / dy).floor();
        if fi < 0.0 || fj < 0.0 || fi >= self.width as f64 || fj >= self.height as f64 {
            return None;
        }
        Some((fi as usize, fj as usize))
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.pixel_of(p).is_some()
    }
}

/// Row-major boolean image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[j * self.width + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        self.data[j * self.width + i] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    /// `(i, j)` of every set pixel, row-major.
    pub fn iter_set(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(k, _)| (k % w, k / w))
    }
}

/// Marks every pixel whose center lies inside `poly` (even-odd scanline).
pub fn rasterize(poly: &Polygon, raster: &Raster) -> Result<Mask, GeomError> {
    let mask = rasterize_unchecked(poly, raster);
    if mask.count() == 0 {
        return Err(GeomError::EmptyRaster);
    }
    Ok(mask)
}

pub(crate) fn rasterize_unchecked(poly: &Polygon, raster: &Raster) -> Mask {
    let (dx, dy) = raster.pixel_size();
    let local: Vec<Point2> = poly
        .vertices()
        .iter()
        .map(|&p| raster.local_of(p))
        .collect();
    let n = local.len();
    let mut mask = Mask::new(raster.width, raster.height);
    let (ymin, ymax) = local
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.y), hi.max(p.y))
        });
    let j0 = ((ymin / dy - 0.5).ceil().max(0.0)) as usize;
    let j1 = ((ymax / dy - 0.5).floor()).min(raster.height as f64 - 1.0);
    if j1 < 0.0 {
        return mask;
    }
    let j1 = j1 as usize;
    let mut xs: Vec<f64> = Vec::with_capacity(8);
    for j in j0..=j1 {
        let yc = (j as f64 + 0.5) * dy;
        xs.clear();
        for k in 0..n {
            let (p, q) = (local[k], local[(k + 1) % n]);
            if (p.y <= yc) != (q.y <= yc) {
                xs.push(p.x + (yc - p.y) / (q.y - p.y) * (q.x - p.x));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let i0 = (pair[0] / dx - 0.5).ceil().max(0.0);
            let i1 = (pair[1] / dx - 0.5).floor().min(raster.width as f64 - 1.0);
            if i1 < i0 {
                continue;
            }
            for i in i0 as usize..=i1 as usize {
                mask.set(i, j, true);
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn hull_drops_interior_point() {
        let hull = convex_hull(&[p(0., 0.), p(1., 0.), p(1., 1.), p(0., 1.), p(0.5, 0.5)]).unwrap();
        assert_eq!(
            hull.vertices(),
            &[p(0., 0.), p(1., 0.), p(1., 1.), p(0., 1.)]
        );
    }

    #[test]
    fn hull_of_triangle_is_identity() {
        let hull = convex_hull(&[p(0., 0.), p(2., 0.), p(1., 1.)]).unwrap();
        assert_eq!(hull.vertices(), &[p(0., 0.), p(2., 0.), p(1., 1.)]);
    }

    #[test]
    fn hull_rejects_degenerate_input() {
        assert!(matches!(
            convex_hull(&[p(0., 0.), p(1., 1.)]),
            Err(GeomError::DegenerateInput(_))
        ));
        assert!(matches!(
            convex_hull(&[p(0., 0.), p(1., 1.), p(2., 2.), p(3., 3.)]),
            Err(GeomError::DegenerateInput(_))
        ));
    }

    #[test]
    fn hull_drops_collinear_edge_points() {
        let hull = convex_hull(&[p(0., 0.), p(1., 0.), p(2., 0.), p(2., 2.), p(0., 2.)]).unwrap();
        assert_eq!(hull.len(), 4);
    }

    #[test]
    fn shoelace_areas() {
        assert_eq!(
            polygon_area(&Polygon::rectangle(0., 0., 1., 1.).unwrap()),
            1.0
        );
        let tri = Polygon::new(vec![p(0., 0.), p(2., 0.), p(0., 2.)]).unwrap();
        assert_eq!(polygon_area(&tri), 2.0);
    }

    #[test]
    fn polygon_new_reorients_clockwise_input() {
        let cw = Polygon::new(vec![p(0., 0.), p(0., 1.), p(1., 1.), p(1., 0.)]).unwrap();
        assert!(cw.area() > 0.0);
    }

    #[test]
    fn polygon_new_rejects_bowtie() {
        let bowtie = Polygon::new(vec![p(0., 0.), p(1., 1.), p(1., 0.), p(0., 1.)]);
        assert!(matches!(bowtie, Err(GeomError::InvalidPolygon(_))));
    }

    #[test]
    fn min_rect_axis_aligned_and_rotated() {
        let corners = [p(-2., -0.5), p(2., -0.5), p(2., 0.5), p(-2., 0.5)];
        let r = min_area_rect(&corners).unwrap();
        assert!((r.half_extents.0 - 2.0).abs() < 1e-12);
        assert!((r.half_extents.1 - 0.5).abs() < 1e-12);
        assert!(r.angle.abs() < 1e-12);

        let theta = 30f64.to_radians();
        let rotated: Vec<_> = corners.iter().map(|c| c.rotate(theta)).collect();
        let r = min_area_rect(&rotated).unwrap();
        assert!((r.half_extents.0 - 2.0).abs() < 1e-9);
        assert!((r.half_extents.1 - 0.5).abs() < 1e-9);
        assert!((r.angle - theta).abs() < 1e-9);
    }

    #[test]
    fn elongation_examples() {
        let square = [p(0., 0.), p(1., 0.), p(1., 1.), p(0., 1.)];
        assert!((elongation(&square).unwrap() - 1.0).abs() < 1e-12);
        let rect = [p(0., 0.), p(4., 0.), p(4., 1.), p(0., 1.)];
        assert!((elongation(&rect).unwrap() - 4.0).abs() < 1e-12);
    }

    fn workspace() -> OrientedRect {
        OrientedRect::new(p(45., 30.), 0.0, 45.0, 30.0).unwrap()
    }

    #[test]
    fn full_workspace_square_fills_grid() {
        let ws = OrientedRect::new(p(5., 5.), 0.0, 5.0, 5.0).unwrap();
        let raster = Raster::new(10, 10, ws);
        let sq = Polygon::rectangle(0., 0., 10., 10.).unwrap();
        assert_eq!(rasterize(&sq, &raster).unwrap().count(), 100);
    }

    #[test]
    fn half_workspace_rectangle_on_100_grid() {
        let raster = Raster::new(100, 100, workspace());
        let half = Polygon::rectangle(0., 0., 45., 60.).unwrap();
        let n = rasterize(&half, &raster).unwrap().count() as i64;
        assert!((n - 5000).abs() <= 100, "count {n}");
    }

    #[test]
    fn tiny_polygon_is_empty_raster() {
        let raster = Raster::new(16, 16, workspace());
        let tiny = Polygon::rectangle(10.01, 10.01, 10.02, 10.02).unwrap();
        assert_eq!(rasterize(&tiny, &raster), Err(GeomError::EmptyRaster));
    }

    #[test]
    fn pixel_lookup_round_trips_centers() {
        let raster = Raster::new(128, 128, workspace());
        for &(i, j) in &[(0, 0), (127, 127), (5, 90), (64, 3)] {
            assert_eq!(raster.pixel_of(raster.pixel_center(i, j)), Some((i, j)));
        }
        assert_eq!(raster.pixel_of(p(-1., 5.)), None);
    }

    #[test]
    fn clip_halfplane_cuts_square_in_half() {
        let sq = Polygon::rectangle(0., 0., 2., 2.).unwrap();
        let half = sq.clip_halfplane(p(1., 0.), 1.0).unwrap();
        assert!((half.area() - 2.0).abs() < 1e-12);
        assert!(sq.clip_halfplane(p(1., 0.), -1.0).is_none());
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(0.5) - 0.5).abs() < 1e-15);
    }
}
