//! Five-keypoint encoding of an oriented box.
//!
//! A box is represented by its four edge midpoints plus its center. Each
//! midpoint gets a quadrant label relative to the center (left / top /
//! right / bottom), a non-negative centripetal shift whose signed version
//! points back at the center, and the set carries one matching radius equal
//! to the distance from the center to the nearest midpoint.

use crate::error::{Error, Result};
use crate::geom::{canonicalize, OrientedBox, Point2};

/// Quadrant label of an edge midpoint relative to the box center.
///
/// Labels follow a clockwise tour in image coordinates starting from the
/// top-left quadrant: `Left`, `Top`, `Right`, `Bottom`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MidLabel {
    Left,
    Top,
    Right,
    Bottom,
}

impl MidLabel {
    /// All labels in canonical (l, t, r, b) order; also the channel order
    /// used by heatmap and shift tensors.
    pub const ALL: [MidLabel; 4] = [MidLabel::Left, MidLabel::Top, MidLabel::Right, MidLabel::Bottom];

    pub fn index(self) -> usize {
        match self {
            MidLabel::Left => 0,
            MidLabel::Top => 1,
            MidLabel::Right => 2,
            MidLabel::Bottom => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<MidLabel> {
        MidLabel::ALL.get(i).copied()
    }

    /// Per-label signs applied to the shift magnitudes so that
    /// `position + signs * shift` moves towards the center.
    ///
    /// A left midpoint sits left of (or directly left of) the center, so the
    /// center lies to its right and below: signs `(+1, +1)`. The remaining
    /// labels follow by the same picture.
    pub fn shift_signs(self) -> (f64, f64) {
        match self {
            MidLabel::Left => (1.0, 1.0),
            MidLabel::Top => (-1.0, 1.0),
            MidLabel::Right => (-1.0, -1.0),
            MidLabel::Bottom => (1.0, -1.0),
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            MidLabel::Left => "l",
            MidLabel::Top => "t",
            MidLabel::Right => "r",
            MidLabel::Bottom => "b",
        }
    }

    pub fn from_short_name(s: &str) -> Option<MidLabel> {
        match s {
            "l" => Some(MidLabel::Left),
            "t" => Some(MidLabel::Top),
            "r" => Some(MidLabel::Right),
            "b" => Some(MidLabel::Bottom),
            _ => None,
        }
    }
}

/// Non-negative centripetal shift magnitudes along x and y.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Shift {
    pub dx: f64,
    pub dy: f64,
}

impl Shift {
    pub const fn new(dx: f64, dy: f64) -> Self {
        Self { dx, dy }
    }
}

/// The five-keypoint encoding of one oriented box.
///
/// `midpoints`, `scores` and `shifts` are indexed by [`MidLabel::index`]
/// (l, t, r, b). Ground-truth sets carry unit scores; decoded sets carry
/// predicted confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    pub midpoints: [Point2; 4],
    pub scores: [f64; 4],
    pub shifts: [Shift; 4],
    pub center: Point2,
    pub center_score: f64,
    /// Matching radius: distance from the center to the nearest midpoint,
    /// i.e. `min(w, h) / 2` for an exact box.
    pub radius: f64,
}

impl KeypointSet {
    pub fn midpoint(&self, label: MidLabel) -> Point2 {
        self.midpoints[label.index()]
    }

    pub fn shift(&self, label: MidLabel) -> Shift {
        self.shifts[label.index()]
    }

    /// Midpoint position after applying the signed centripetal shift; equals
    /// the center exactly for a ground-truth set.
    pub fn shifted(&self, label: MidLabel) -> Point2 {
        let p = self.midpoint(label);
        let s = self.shift(label);
        let (sx, sy) = label.shift_signs();
        Point2::new(p.x + sx * s.dx, p.y + sy * s.dy)
    }
}

/// Assigns the quadrant label of `p` relative to center `c`.
///
/// Closed boundaries: directly left -> `Left`, directly up -> `Top`,
/// directly right -> `Right`, directly down -> `Bottom`. Returns `None` only
/// when `p == c`.
fn quadrant_label(p: Point2, c: Point2) -> Option<MidLabel> {
    if p.x < c.x {
        if p.y <= c.y {
            Some(MidLabel::Left) // top-left quadrant or directly left
        } else {
            Some(MidLabel::Bottom) // bottom-left quadrant
        }
    } else if p.x > c.x {
        if p.y < c.y {
            Some(MidLabel::Top) // top-right quadrant
        } else {
            Some(MidLabel::Right) // bottom-right quadrant or directly right
        }
    } else if p.y < c.y {
        Some(MidLabel::Top) // directly up
    } else if p.y > c.y {
        Some(MidLabel::Bottom) // directly down
    } else {
        None
    }
}

/// Encodes a box into its five-keypoint set.
///
/// The box is canonicalized first; for a canonical box the four edge
/// midpoints always land in four distinct quadrants, so each label is used
/// exactly once. Shift magnitudes are `(|x_i - x_c|, |y_i - y_c|)` and the
/// radius is the distance to the nearest midpoint.
pub fn box_to_keypoints(b: &OrientedBox) -> Result<KeypointSet> {
    let b = canonicalize(b)?;
    let c = b.center;
    let u = b.theta.dir() * (b.w * 0.5);
    let v = b.theta.perp_dir() * (b.h * 0.5);
    let raw = [c + u, c - u, c + v, c - v];

    let mut midpoints = [Point2::default(); 4];
    let mut seen = [false; 4];
    for p in raw {
        let label = quadrant_label(p, c).ok_or_else(|| {
            Error::DegenerateGeometry("edge midpoint coincides with the box center".into())
        })?;
        let i = label.index();
        if seen[i] {
            return Err(Error::DegenerateGeometry(format!(
                "two edge midpoints share quadrant label '{}'",
                label.short_name()
            )));
        }
        seen[i] = true;
        midpoints[i] = p;
    }

    let mut shifts = [Shift::default(); 4];
    let mut radius = f64::INFINITY;
    for (i, p) in midpoints.iter().enumerate() {
        shifts[i] = Shift::new((p.x - c.x).abs(), (p.y - c.y).abs());
        radius = radius.min(p.dist(c));
    }

    Ok(KeypointSet {
        midpoints,
        scores: [1.0; 4],
        shifts,
        center: c,
        center_score: 1.0,
        radius,
    })
}
