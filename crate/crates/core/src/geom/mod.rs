//! Planar primitives for oriented boxes in image coordinates.
//!
//! Coordinates follow the usual image convention: `x` grows to the right,
//! `y` grows downwards, angles are measured from the +x axis towards +y.
//! Because a rectangle is symmetric under a half turn, orientations live on
//! the half-circle `[0, pi)`; the canonical box form further restricts the
//! angle to `[0, pi/2)` by swapping the extents when needed.

mod keypoints;
mod refine;

pub use keypoints::{box_to_keypoints, KeypointSet, MidLabel, Shift};
pub use refine::{
    build_box_simple, min_area_rect, orientation_objective, refine_and_build, refine_center,
    solve_orientation,
};

use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// A point (or free vector) in the image plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product; positive when `other` is
    /// clockwise from `self` in image (y-down) coordinates.
    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Self) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// An orientation on the half-circle, always normalized into `[0, pi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angle(f64);

impl Angle {
    /// Wraps `radians` into `[0, pi)`. Non-finite input is preserved so that
    /// box validation can report it.
    pub fn new(radians: f64) -> Self {
        if !radians.is_finite() {
            return Self(radians);
        }
        let mut t = radians.rem_euclid(PI);
        // rem_euclid of a tiny negative value can round up to exactly pi.
        if t >= PI {
            t -= PI;
        }
        Self(t.max(0.0))
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// Unit vector along the orientation.
    pub fn dir(self) -> Point2 {
        Point2::new(self.0.cos(), self.0.sin())
    }

    /// Unit vector along the perpendicular orientation (`theta + pi/2`).
    pub fn perp_dir(self) -> Point2 {
        Point2::new(-self.0.sin(), self.0.cos())
    }

    /// Circular distance to `other` with period pi.
    pub fn dist(self, other: Angle) -> f64 {
        let d = (self.0 - other.0).rem_euclid(PI);
        d.min(PI - d)
    }
}

/// An oriented rectangle: `w` extends along `theta`, `h` along `theta + pi/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Point2,
    pub w: f64,
    pub h: f64,
    pub theta: Angle,
    pub class_id: u32,
}

impl OrientedBox {
    pub fn new(center: Point2, w: f64, h: f64, theta: Angle, class_id: u32) -> Self {
        Self { center, w, h, theta, class_id }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Corner positions in a consistent winding (positive shoelace sum in
    /// image coordinates).
    pub fn corners(&self) -> [Point2; 4] {
        let u = self.theta.dir() * (self.w * 0.5);
        let v = self.theta.perp_dir() * (self.h * 0.5);
        let c = self.center;
        [c + u + v, c - u + v, c - u - v, c + u - v]
    }

    pub fn is_canonical(&self) -> bool {
        self.center.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0
            && self.theta.radians().is_finite()
            && (0.0..FRAC_PI_2).contains(&self.theta.radians())
    }
}

/// Reduces a box to canonical form: `theta` in `[0, pi/2)`, with `w`/`h`
/// swapped when the stored angle falls in `[pi/2, pi)`. The represented point
/// set is unchanged.
///
/// Errors with [`Error::InvalidBox`] on non-finite fields or non-positive
/// extents.
pub fn canonicalize(b: &OrientedBox) -> Result<OrientedBox> {
    if !b.center.is_finite() || !b.w.is_finite() || !b.h.is_finite() || !b.theta.radians().is_finite() {
        return Err(Error::InvalidBox(format!(
            "non-finite field in box (center=({}, {}), w={}, h={}, theta={})",
            b.center.x,
            b.center.y,
            b.w,
            b.h,
            b.theta.radians()
        )));
    }
    if b.w <= 0.0 || b.h <= 0.0 {
        return Err(Error::InvalidBox(format!(
            "non-positive extent (w={}, h={})",
            b.w, b.h
        )));
    }
    let t = Angle::new(b.theta.radians()).radians();
    if t >= FRAC_PI_2 {
        Ok(OrientedBox::new(
            b.center,
            b.h,
            b.w,
            Angle::new(t - FRAC_PI_2),
            b.class_id,
        ))
    } else {
        Ok(OrientedBox::new(b.center, b.w, b.h, Angle::new(t), b.class_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn angle_wraps_into_half_circle() {
        assert!((Angle::new(3.0 * PI / 4.0).radians() - 3.0 * PI / 4.0).abs() < EPS);
        assert_eq!(Angle::new(PI).radians(), 0.0);
        assert!((Angle::new(PI + 0.25).radians() - 0.25).abs() < EPS);
        assert!((Angle::new(-0.25).radians() - (PI - 0.25)).abs() < EPS);
        // Tiny negative values must not escape the [0, pi) interval.
        let a = Angle::new(-1e-18);
        assert!(a.radians() >= 0.0 && a.radians() < PI);
    }

    #[test]
    fn angle_distance_is_circular() {
        let a = Angle::new(0.01);
        let b = Angle::new(PI - 0.01);
        assert!((a.dist(b) - 0.02).abs() < EPS);
        assert_eq!(a.dist(a), 0.0);
    }

    #[test]
    fn canonicalize_swaps_extents_above_quarter_turn() {
        let b = OrientedBox::new(Point2::new(0.0, 0.0), 2.0, 4.0, Angle::new(3.0 * PI / 4.0), 0);
        let c = canonicalize(&b).unwrap();
        assert_eq!(c.w, 4.0);
        assert_eq!(c.h, 2.0);
        assert!((c.theta.radians() - PI / 4.0).abs() < EPS);
        assert!(c.is_canonical());
    }

    #[test]
    fn canonicalize_maps_half_turn_to_zero() {
        let b = OrientedBox::new(Point2::new(5.0, 5.0), 3.0, 3.0, Angle::new(PI), 0);
        let c = canonicalize(&b).unwrap();
        assert_eq!((c.w, c.h), (3.0, 3.0));
        assert_eq!(c.theta.radians(), 0.0);
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let b = OrientedBox::new(Point2::new(1.0, 2.0), 7.0, 3.0, Angle::new(2.8), 1);
        let once = canonicalize(&b).unwrap();
        let twice = canonicalize(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn canonicalize_rejects_bad_boxes() {
        let p = Point2::new(0.0, 0.0);
        assert!(canonicalize(&OrientedBox::new(p, 0.0, 1.0, Angle::new(0.0), 0)).is_err());
        assert!(canonicalize(&OrientedBox::new(p, 1.0, -2.0, Angle::new(0.0), 0)).is_err());
        assert!(canonicalize(&OrientedBox::new(p, f64::NAN, 1.0, Angle::new(0.0), 0)).is_err());
        let nan_center = Point2::new(f64::NAN, 0.0);
        assert!(canonicalize(&OrientedBox::new(nan_center, 1.0, 1.0, Angle::new(0.0), 0)).is_err());
    }

    #[test]
    fn corners_wind_positively() {
        let b = OrientedBox::new(Point2::new(0.0, 0.0), 2.0, 2.0, Angle::new(0.0), 0);
        let cs = b.corners();
        let mut shoelace = 0.0;
        for i in 0..4 {
            let p = cs[i];
            let q = cs[(i + 1) % 4];
            shoelace += p.x * q.y - q.x * p.y;
        }
        assert!((shoelace / 2.0 - 4.0).abs() < EPS, "area should be w*h");
    }
}
