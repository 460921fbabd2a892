use serde::{Deserialize, Serialize};

use super::{Observation, PerceptError};
use crate::geom::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthHeuristic {
    /// Lowest perceived surface point on the bag.
    MinDepth,
    /// Strongest depth edge away from the bag boundary.
    MaxSobelGradient,
}

/// Pixels eroded away from the bag boundary before the Sobel search.
const SOBEL_ERODE_PX: usize = 2;

/// 8-neighbour erosion; pixels beyond the grid count as unset.
pub(crate) fn erode(width: usize, height: usize, mask: &[bool], steps: usize) -> Vec<bool> {
    let mut cur = mask.to_vec();
    for _ in 0..steps {
        let mut next = vec![false; cur.len()];
        for j in 0..height {
            for i in 0..width {
                if !cur[j * width + i] {
                    continue;
                }
                let mut keep = true;
                'n: for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (ni, nj) = (i as i64 + di, j as i64 + dj);
                        if ni < 0
                            || nj < 0
                            || ni as usize >= width
                            || nj as usize >= height
                            || !cur[nj as usize * width + ni as usize]
                        {
                            keep = false;
                            break 'n;
                        }
                    }
                }
                next[j * width + i] = keep;
            }
        }
        cur = next;
    }
    cur
}

/// 3x3 Sobel gradient magnitude at `(i, j)` with replicated borders.
pub fn sobel_magnitude(width: usize, height: usize, field: &[f64], i: usize, j: usize) -> f64 {
    let at = |di: i64, dj: i64| {
        let x = (i as i64 + di).clamp(0, width as i64 - 1) as usize;
        let y = (j as i64 + dj).clamp(0, height as i64 - 1) as usize;
        field[y * width + x]
    };
    let gx = (at(1, -1) + 2.0 * at(1, 0) + at(1, 1)) - (at(-1, -1) + 2.0 * at(-1, 0) + at(-1, 1));
    let gy = (at(-1, 1) + 2.0 * at(0, 1) + at(1, 1)) - (at(-1, -1) + 2.0 * at(0, -1) + at(1, -1));
    gx.hypot(gy)
}

/// Placement point chosen from the depth image alone.
pub fn depth_heuristics(o: &Observation, kind: DepthHeuristic) -> Result<Point2, PerceptError> {
    let bag: Vec<bool> = o.classes.iter().map(|c| c.is_bag()).collect();
    if !bag.iter().any(|&b| b) {
        return Err(PerceptError::NoBagVisible);
    }
    let (w, h) = (o.width(), o.height());
    let best = match kind {
        DepthHeuristic::MinDepth => (0..bag.len()).filter(|&k| bag[k]).fold(
            None,
            |best: Option<(usize, f64)>, k| match best {
                Some((_, v)) if v <= o.depth[k] => best,
                _ => Some((k, o.depth[k])),
            },
        ),
        DepthHeuristic::MaxSobelGradient => {
            let mut inner = erode(w, h, &bag, SOBEL_ERODE_PX);
            if !inner.iter().any(|&b| b) {
                inner = bag;
            }
            (0..inner.len())
                .filter(|&k| inner[k])
                .map(|k| {
                    let (i, j) = o.raster.coords(k);
                    (k, sobel_magnitude(w, h, &o.depth, i, j))
                })
                .fold(None, |best: Option<(usize, f64)>, (k, g)| match best {
                    Some((_, v)) if v >= g => best,
                    _ => Some((k, g)),
                })
        }
    };
    let (k, _) = best.ok_or(PerceptError::NoBagVisible)?;
    Ok(o.center_of(k))
}

/// Initial gripper height: perceived surface height at `p`, floored at
/// `h_min` so the gripper never drives into the table.
pub fn perceived_grasp_height(o: &Observation, p: Point2, h_min: f64) -> f64 {
    let (dx, dy) = o.raster.pixel_size();
    let (a, b) = o.raster.workspace.half_extents;
    let local = o.raster.workspace.to_local(p) + Point2::new(a, b);
    let i = ((local.x / dx).floor().max(0.0) as usize).min(o.width() - 1);
    let j = ((local.y / dy).floor().max(0.0) as usize).min(o.height() - 1);
    o.depth_at(i, j).max(h_min)
}
