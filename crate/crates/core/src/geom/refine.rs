//! From noisy keypoints back to an oriented box.
//!
//! The decoding route is: refine the center as a score-weighted mean of the
//! five keypoints, solve the box orientation by minimizing the summed
//! point-to-axis deviations of the four midpoints, then recover the extents
//! from score-weighted projections onto the solved axes. A simpler
//! weight-free builder (`build_box_simple`) intersects the two midpoint
//! lines into a parallelogram and takes its minimum-area enclosing
//! rectangle; it serves as the baseline the refined route must beat under
//! noise.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geom::{canonicalize, Angle, MidLabel, OrientedBox, Point2};

/// Number of coarse samples over `[0, pi)` before golden-section refinement.
const ORIENTATION_GRID: usize = 1024;
/// Absolute angular tolerance of the golden-section refinement.
const ORIENTATION_TOL: f64 = 1e-8;
/// At most this many coarse local minima are refined; ties beyond that are
/// plateau artifacts and share their objective value with a refined one.
const MAX_BRACKETS: usize = 8;

/// Score-weighted mean of the five keypoints.
///
/// `points` holds the four midpoint entries (shifted positions) followed by
/// the raw center. Weights are the scores normalized to sum to one, so the
/// result is a convex combination of the inputs and scaling all scores by a
/// common positive factor changes nothing.
///
/// Errors with [`Error::DegenerateWeights`] when every score is zero, and
/// with [`Error::InvalidArgument`] on negative scores.
pub fn refine_center(points: &[(Point2, f64); 5]) -> Result<Point2> {
    let mut sum = 0.0;
    for (_, s) in points {
        if !s.is_finite() || *s < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "keypoint score must be finite and >= 0, got {s}"
            )));
        }
        sum += s;
    }
    if sum <= 0.0 {
        return Err(Error::DegenerateWeights(
            "all five keypoint scores are zero".into(),
        ));
    }
    let mut acc = Point2::default();
    for (p, s) in points {
        acc = acc + *p * (*s / sum);
    }
    Ok(acc)
}

/// Summed unsigned deviation of the four midpoints from the two candidate
/// axes through `center` at angle `theta`.
///
/// The left/right midpoints are measured against the axis along `theta`, the
/// top/bottom midpoints against the perpendicular axis. Distances use the
/// cross product with the axis direction, which stays finite for vertical
/// axes (no slope involved). `midpoints` is indexed l, t, r, b.
pub fn orientation_objective(theta: Angle, center: Point2, midpoints: &[Point2; 4]) -> f64 {
    let u = theta.dir();
    let v = theta.perp_dir();
    let d = |p: Point2, axis: Point2| axis.cross(p - center).abs();
    d(midpoints[MidLabel::Left.index()], u)
        + d(midpoints[MidLabel::Right.index()], u)
        + d(midpoints[MidLabel::Top.index()], v)
        + d(midpoints[MidLabel::Bottom.index()], v)
}

/// Golden-section minimization of `f` on `[a, b]` down to interval width
/// `tol`; returns the midpoint of the final bracket and its value.
fn golden_min(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - (b - a) * INV_PHI;
    let mut x2 = a + (b - a) * INV_PHI;
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - (b - a) * INV_PHI;
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + (b - a) * INV_PHI;
            f2 = f(x2);
        }
    }
    let xm = 0.5 * (a + b);
    (xm, f(xm))
}

/// Minimizes [`orientation_objective`] over `[0, pi)`.
///
/// A 1024-point grid locates candidate basins; every coarse local minimum
/// (up to a small cap, best-first) is refined by golden section on its
/// bracketing interval to an absolute tolerance of 1e-8 rad, and the best
/// refined angle wins. Refining all coarse basins rather than just the
/// best one guards against two kinks of the piecewise-sinusoidal objective
/// falling into a single coarse cell.
///
/// Errors with [`Error::DegenerateGeometry`] when all four midpoints
/// coincide with the center, which leaves every orientation equally good.
pub fn solve_orientation(center: Point2, midpoints: &[Point2; 4]) -> Result<Angle> {
    let spread = midpoints.iter().map(|p| p.dist(center)).fold(0.0, f64::max);
    if spread < 1e-9 {
        return Err(Error::DegenerateGeometry(
            "all four midpoints coincide with the center".into(),
        ));
    }

    let f = |t: f64| orientation_objective(Angle::new(t), center, midpoints);
    let step = PI / ORIENTATION_GRID as f64;
    let values: Vec<f64> = (0..ORIENTATION_GRID).map(|i| f(i as f64 * step)).collect();

    // Coarse local minima on the circular grid.
    let mut minima: Vec<usize> = (0..ORIENTATION_GRID)
        .filter(|&i| {
            let prev = values[(i + ORIENTATION_GRID - 1) % ORIENTATION_GRID];
            let next = values[(i + 1) % ORIENTATION_GRID];
            values[i] <= prev && values[i] <= next
        })
        .collect();
    minima.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    minima.truncate(MAX_BRACKETS);

    let mut best_t = 0.0;
    let mut best_f = f64::INFINITY;
    for &i in &minima {
        // Unwrapped bracket around grid sample i; f handles the wrap.
        let a = (i as f64 - 1.0) * step;
        let b = (i as f64 + 1.0) * step;
        let (t, ft) = golden_min(&f, a, b, ORIENTATION_TOL);
        if ft < best_f {
            best_f = ft;
            best_t = t;
        }
    }
    Ok(Angle::new(best_t))
}

/// Builds the final box from a refined center, a solved orientation, and the
/// four raw midpoints with their confidences (indexed l, t, r, b).
///
/// Each midpoint is projected onto its axis through `center`; the half
/// extent along the orientation is the score-weighted mean of the left and
/// right projection distances, and likewise for the perpendicular pair. The
/// returned score is the arithmetic mean of the five keypoint confidences.
pub fn refine_and_build(
    center: Point2,
    center_score: f64,
    theta: Angle,
    midpoints: &[(Point2, f64); 4],
    class_id: u32,
) -> Result<(OrientedBox, f64)> {
    for (_, s) in midpoints {
        if !s.is_finite() || *s < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "midpoint score must be finite and >= 0, got {s}"
            )));
        }
    }
    if !center_score.is_finite() || center_score < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "center score must be finite and >= 0, got {center_score}"
        )));
    }

    let half_extent = |axis: Point2, a: MidLabel, b: MidLabel| -> Result<f64> {
        let (pa, sa) = midpoints[a.index()];
        let (pb, sb) = midpoints[b.index()];
        let wsum = sa + sb;
        if wsum <= 0.0 {
            return Err(Error::DegenerateWeights(format!(
                "scores of the {}/{} pair are both zero",
                a.short_name(),
                b.short_name()
            )));
        }
        let da = (pa - center).dot(axis).abs();
        let db = (pb - center).dot(axis).abs();
        Ok((sa * da + sb * db) / wsum)
    };

    let half_w = half_extent(theta.dir(), MidLabel::Left, MidLabel::Right)?;
    let half_h = half_extent(theta.perp_dir(), MidLabel::Top, MidLabel::Bottom)?;
    if half_w <= 0.0 || half_h <= 0.0 {
        return Err(Error::DegenerateBox(format!(
            "projected half extents collapsed (half_w={half_w}, half_h={half_h})"
        )));
    }

    let bbox = canonicalize(&OrientedBox::new(
        center,
        2.0 * half_w,
        2.0 * half_h,
        theta,
        class_id,
    ))?;
    let score =
        (midpoints.iter().map(|(_, s)| s).sum::<f64>() + center_score) / 5.0;
    Ok((bbox, score))
}

/// Minimum-area rectangle enclosing a convex polygon given in winding order.
///
/// Classic rotating-calipers fact: the optimum is aligned with one of the
/// polygon edges, so each edge direction is tried in turn.
pub fn min_area_rect(points: &[Point2], class_id: u32) -> Result<OrientedBox> {
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "need at least 3 points for an enclosing rectangle, got {}",
            points.len()
        )));
    }
    let mut best: Option<(f64, OrientedBox)> = None;
    for i in 0..points.len() {
        let e = points[(i + 1) % points.len()] - points[i];
        if e.norm() < 1e-12 {
            continue;
        }
        let t = e.y.atan2(e.x);
        let (sin, cos) = t.sin_cos();
        // Rotate by -t, take the axis-aligned bounding box.
        let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            let rx = p.x * cos + p.y * sin;
            let ry = -p.x * sin + p.y * cos;
            x0 = x0.min(rx);
            x1 = x1.max(rx);
            y0 = y0.min(ry);
            y1 = y1.max(ry);
        }
        let (w, h) = (x1 - x0, y1 - y0);
        let area = w * h;
        if best.as_ref().is_some_and(|(a, _)| *a <= area) {
            continue;
        }
        let (mx, my) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
        let center = Point2::new(mx * cos - my * sin, mx * sin + my * cos);
        let rect = OrientedBox::new(center, w, h, Angle::new(t), class_id);
        best = Some((area, rect));
    }
    let (_, rect) =
        best.ok_or_else(|| Error::DegenerateGeometry("all candidate edges are zero-length".into()))?;
    canonicalize(&rect).map_err(|e| Error::DegenerateGeometry(format!("degenerate enclosing rectangle: {e}")))
}

/// Intersection of two lines given as point + direction.
fn line_intersection(p1: Point2, d1: Point2, p2: Point2, d2: Point2) -> Option<Point2> {
    let denom = d1.cross(d2);
    let scale = d1.norm() * d2.norm();
    if denom.abs() <= 1e-12 * scale {
        return None;
    }
    let t = (p2 - p1).cross(d2) / denom;
    Some(p1 + d1 * t)
}

/// Weight-free box construction from the four raw midpoints (l, t, r, b).
///
/// The line through the left/right pair is translated to pass through the
/// top and the bottom midpoints, the line through the top/bottom pair
/// through the left and the right ones; the four lines bound a
/// parallelogram whose minimum-area enclosing rectangle is returned.
///
/// Errors with [`Error::DegenerateGeometry`] when either pair coincides or
/// the two lines are parallel.
pub fn build_box_simple(midpoints: &[Point2; 4], class_id: u32) -> Result<OrientedBox> {
    let l = midpoints[MidLabel::Left.index()];
    let t = midpoints[MidLabel::Top.index()];
    let r = midpoints[MidLabel::Right.index()];
    let b = midpoints[MidLabel::Bottom.index()];

    let d_lr = r - l;
    let d_tb = b - t;
    if d_lr.norm() < 1e-12 {
        return Err(Error::DegenerateGeometry("left and right midpoints coincide".into()));
    }
    if d_tb.norm() < 1e-12 {
        return Err(Error::DegenerateGeometry("top and bottom midpoints coincide".into()));
    }

    // Sides: the l-r direction through t and through b, the t-b direction
    // through l and through r. Corners in winding order around the
    // parallelogram.
    let corners = [
        line_intersection(t, d_lr, l, d_tb),
        line_intersection(t, d_lr, r, d_tb),
        line_intersection(b, d_lr, r, d_tb),
        line_intersection(b, d_lr, l, d_tb),
    ];
    let mut poly = [Point2::default(); 4];
    for (dst, c) in poly.iter_mut().zip(corners) {
        *dst = c.ok_or_else(|| {
            Error::DegenerateGeometry("midpoint axes are parallel; no parallelogram exists".into())
        })?;
    }
    min_area_rect(&poly, class_id)
}
