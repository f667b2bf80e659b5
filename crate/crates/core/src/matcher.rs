//! Grouping keypoint candidates into objects and decoding them into boxes.
//!
//! Each midpoint candidate casts a vote for a center by walking along its
//! signed centripetal shift; the vote lands on the nearest surviving center
//! of the same class and only sticks when the distance falls within that
//! center's matching radius. A center becomes an object once every one of
//! the four labels has at least one assigned midpoint; the best-scoring
//! midpoint per label is kept.

use crate::error::Result;
use crate::geom::{
    refine_and_build, refine_center, solve_orientation, MidLabel, OrientedBox, Point2, Shift,
};

/// A midpoint keypoint candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidpointDet {
    pub label: MidLabel,
    pub pos: Point2,
    pub score: f64,
    /// Non-negative shift magnitudes towards the center.
    pub shift: Shift,
    pub class_id: u32,
}

impl MidpointDet {
    /// Position after applying the signed centripetal shift: the point where
    /// this candidate expects its center to be.
    pub fn shifted_position(&self) -> Point2 {
        let (sx, sy) = self.label.shift_signs();
        Point2::new(self.pos.x + sx * self.shift.dx, self.pos.y + sy * self.shift.dy)
    }
}

/// A center keypoint candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterDet {
    pub pos: Point2,
    pub score: f64,
    /// Matching radius in pixels (at least one pixel).
    pub radius: f64,
    pub class_id: u32,
}

/// A center with one chosen midpoint per label (indexed l, t, r, b).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedObject {
    pub center: CenterDet,
    pub chosen: [MidpointDet; 4],
}

/// A decoded detection: the box carries the class id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: OrientedBox,
    pub score: f64,
}

/// Counters from [`decode`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeStats {
    /// Groups formed by [`group`].
    pub groups: usize,
    /// Groups dropped because box construction failed.
    pub dropped: usize,
}

/// Groups midpoints around centers.
///
/// Candidates below their respective score threshold are discarded first.
/// Every surviving midpoint is assigned to the nearest surviving center of
/// its class (distance from the midpoint's shifted position to the center
/// position; ties go to the earlier center in input order), and the
/// assignment holds only when that distance is within the center's radius.
/// Centers with at least one midpoint per label form a group, keeping the
/// best midpoint per label (score, then smaller distance, then input
/// order). Groups are returned by center score descending (stable for
/// ties).
pub fn group(
    centers: &[CenterDet],
    midpoints: &[MidpointDet],
    center_thresh: f64,
    midpoint_thresh: f64,
) -> Vec<GroupedObject> {
    let kept_centers: Vec<(usize, &CenterDet)> = centers
        .iter()
        .enumerate()
        .filter(|(_, c)| c.score >= center_thresh)
        .collect();

    // chosen[center][label] = (midpoint index, score, distance)
    let mut chosen: Vec<[Option<(usize, f64, f64)>; 4]> = vec![[None; 4]; kept_centers.len()];

    for (mi, m) in midpoints.iter().enumerate() {
        if m.score < midpoint_thresh {
            continue;
        }
        let sp = m.shifted_position();
        let mut nearest: Option<(usize, f64)> = None;
        for (slot, (_, c)) in kept_centers.iter().enumerate() {
            if c.class_id != m.class_id {
                continue;
            }
            let d = sp.dist(c.pos);
            // Strict '<' keeps the earliest center on exact ties.
            if nearest.is_none_or(|(_, best)| d < best) {
                nearest = Some((slot, d));
            }
        }
        let Some((slot, d)) = nearest else { continue };
        if d > kept_centers[slot].1.radius {
            continue; // nearest center is out of reach; the vote is lost
        }
        let cell = &mut chosen[slot][m.label.index()];
        let better = match cell {
            None => true,
            Some((_, s, dist)) => {
                m.score > *s || (m.score == *s && d < *dist)
                // equal score and distance: keep the earlier input index
            }
        };
        if better {
            *cell = Some((mi, m.score, d));
        }
    }

    let mut groups: Vec<GroupedObject> = kept_centers
        .iter()
        .zip(&chosen)
        .filter_map(|((_, c), slots)| {
            let picks = [
                slots[0]?, slots[1]?, slots[2]?, slots[3]?,
            ];
            Some(GroupedObject {
                center: **c,
                chosen: [
                    midpoints[picks[0].0],
                    midpoints[picks[1].0],
                    midpoints[picks[2].0],
                    midpoints[picks[3].0],
                ],
            })
        })
        .collect();
    groups.sort_by(|a, b| b.center.score.total_cmp(&a.center.score));
    groups
}

/// Full decoding pipeline: group, refine the center from the five keypoints
/// (shifted midpoints plus raw center), solve the orientation against the
/// raw midpoints, and build the box from score-weighted projections.
/// Groups whose construction degenerates are dropped and counted.
///
/// Detections are returned by score descending.
pub fn decode(
    centers: &[CenterDet],
    midpoints: &[MidpointDet],
    center_thresh: f64,
    midpoint_thresh: f64,
) -> (Vec<Detection>, DecodeStats) {
    let groups = group(centers, midpoints, center_thresh, midpoint_thresh);
    let mut stats = DecodeStats { groups: groups.len(), dropped: 0 };
    let mut dets = Vec::with_capacity(groups.len());
    for g in &groups {
        match decode_group(g) {
            Ok(det) => dets.push(det),
            Err(_) => stats.dropped += 1,
        }
    }
    dets.sort_by(|a, b| b.score.total_cmp(&a.score));
    (dets, stats)
}

fn decode_group(g: &GroupedObject) -> Result<Detection> {
    let five: [(Point2, f64); 5] = [
        (g.chosen[0].shifted_position(), g.chosen[0].score),
        (g.chosen[1].shifted_position(), g.chosen[1].score),
        (g.chosen[2].shifted_position(), g.chosen[2].score),
        (g.chosen[3].shifted_position(), g.chosen[3].score),
        (g.center.pos, g.center.score),
    ];
    let center = refine_center(&five)?;
    let raw = [
        g.chosen[0].pos,
        g.chosen[1].pos,
        g.chosen[2].pos,
        g.chosen[3].pos,
    ];
    let theta = solve_orientation(center, &raw)?;
    let scored: [(Point2, f64); 4] = [
        (g.chosen[0].pos, g.chosen[0].score),
        (g.chosen[1].pos, g.chosen[1].score),
        (g.chosen[2].pos, g.chosen[2].score),
        (g.chosen[3].pos, g.chosen[3].score),
    ];
    let (bbox, score) =
        refine_and_build(center, g.center.score, theta, &scored, g.center.class_id)?;
    Ok(Detection { bbox, score })
}
