//! Rotated-box overlap and detection-quality metrics.
//!
//! IoU between oriented boxes goes through exact convex polygon clipping
//! (Sutherland–Hodgman) and the shoelace area. Detection scoring follows
//! the classic 11-point interpolated average precision protocol with greedy
//! score-ordered matching; ground truth marked `difficult` neither counts
//! towards recall nor turns overlapping detections into false positives.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::geom::{OrientedBox, Point2};

/// A simple polygon in winding order (positive shoelace sum for box
/// corners as produced by [`box_to_polygon`]).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polygon {
    pub vertices: Vec<Point2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point2>) -> Self {
        Self { vertices }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Unsigned shoelace area.
    pub fn area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let mut sum = 0.0;
        for (i, p) in self.vertices.iter().enumerate() {
            let q = self.vertices[(i + 1) % self.vertices.len()];
            sum += p.x * q.y - q.x * p.y;
        }
        (sum * 0.5).abs()
    }
}

/// The four corners of a box as a polygon.
pub fn box_to_polygon(b: &OrientedBox) -> Polygon {
    Polygon::new(b.corners().to_vec())
}

/// Clips `subject` against convex `clipper` (Sutherland–Hodgman). Both are
/// expected in the winding produced by [`box_to_polygon`]; the result is
/// empty when the overlap is empty or degenerates to a point or segment.
pub fn convex_clip(subject: &Polygon, clipper: &Polygon) -> Polygon {
    if subject.is_empty() || clipper.is_empty() {
        return Polygon::default();
    }
    let mut output = subject.vertices.clone();
    let n = clipper.vertices.len();
    for i in 0..n {
        if output.len() < 3 {
            return Polygon::default();
        }
        let a = clipper.vertices[i];
        let b = clipper.vertices[(i + 1) % n];
        let edge = b - a;
        let input = std::mem::take(&mut output);
        // Positive cross = on the interior side for positively wound clippers.
        let inside = |p: Point2| edge.cross(p - a) >= 0.0;
        for (j, &cur) in input.iter().enumerate() {
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = inside(cur);
            let prev_in = inside(prev);
            if cur_in != prev_in {
                // Edge crossing: intersect [prev, cur] with the clip line.
                let d = cur - prev;
                let denom = edge.cross(d);
                if denom.abs() > 1e-30 {
                    let t = edge.cross(a - prev) / denom;
                    output.push(prev + d * t);
                }
            }
            if cur_in {
                output.push(cur);
            }
        }
    }
    if output.len() < 3 {
        return Polygon::default();
    }
    Polygon::new(output)
}

/// Exact intersection-over-union of two oriented boxes.
///
/// Clips one corner polygon against the other; intersection areas below
/// 1e-12 are treated as empty contact. The result is clamped into `[0, 1]`
/// to absorb floating-point wiggle.
pub fn rotated_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let pa = box_to_polygon(a);
    let pb = box_to_polygon(b);
    let mut inter = convex_clip(&pa, &pb).area();
    if inter < 1e-12 {
        inter = 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// One scored detection tied to an image; the box carries the class id.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub image_id: String,
    pub bbox: OrientedBox,
    pub score: f64,
}

/// One ground-truth instance tied to an image.
#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub image_id: String,
    pub bbox: OrientedBox,
    pub difficult: bool,
}

/// Outcome of greedy matching for one detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOutcome {
    TruePositive,
    FalsePositive,
    /// Matched a `difficult` ground truth: dropped from the PR curve.
    Ignored,
}

/// Greedy matching of one class's detections against its ground truth.
///
/// Detections are visited by score descending (ties by input order); each
/// claims the unmatched same-image ground truth with the highest IoU when
/// that IoU reaches `iou_thr`, else it is a false positive. Every ground
/// truth is claimed at most once. A detection whose best admissible overlap
/// is a `difficult` instance is ignored. Returns `(index into dets,
/// outcome)` in the visiting order.
pub fn match_detections(
    dets: &[DetectionRecord],
    gts: &[GtInstance],
    iou_thr: f64,
) -> Vec<(usize, MatchOutcome)> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));

    let mut claimed = vec![false; gts.len()];
    let mut out = Vec::with_capacity(dets.len());
    for &di in &order {
        let det = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt.image_id != det.image_id || (claimed[gi] && !gt.difficult) {
                continue;
            }
            let iou = rotated_iou(&det.bbox, &gt.bbox);
            // Strictly-greater keeps the earliest ground truth on ties.
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        let outcome = match best {
            Some((gi, iou)) if iou >= iou_thr => {
                if gts[gi].difficult {
                    MatchOutcome::Ignored
                } else {
                    claimed[gi] = true;
                    MatchOutcome::TruePositive
                }
            }
            _ => MatchOutcome::FalsePositive,
        };
        out.push((di, outcome));
    }
    out
}

/// 11-point interpolated average precision.
///
/// `tp_flags` is the score-ordered true/false-positive sequence;
/// `num_gt` the number of non-difficult ground-truth instances. At each
/// recall level `r` in `{0, 0.1, ..., 1.0}` the maximum precision at recall
/// `>= r` is averaged.
pub fn ap_voc07(tp_flags: &[bool], num_gt: usize) -> Result<f64> {
    let tp_total = tp_flags.iter().filter(|&&t| t).count();
    if num_gt == 0 {
        if tp_total > 0 {
            return Err(Error::InvalidArgument(format!(
                "{tp_total} true positives against zero ground truth"
            )));
        }
        return Ok(0.0);
    }
    let mut curve = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (i, &is_tp) in tp_flags.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        let recall = tp as f64 / num_gt as f64;
        let precision = tp as f64 / (i + 1) as f64;
        curve.push((recall, precision));
    }
    let mut ap = 0.0;
    for level in 0..=10 {
        let r = level as f64 / 10.0;
        let best = curve
            .iter()
            .filter(|(recall, _)| *recall >= r - 1e-12)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        ap += best;
    }
    Ok(ap / 11.0)
}

/// Mean of per-class average precisions.
pub fn mean_ap(per_class: &[f64]) -> f64 {
    if per_class.is_empty() {
        return 0.0;
    }
    per_class.iter().sum::<f64>() / per_class.len() as f64
}

/// Per-class summary from [`evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEval {
    pub class_id: u32,
    pub ap: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    /// Non-difficult ground-truth instances.
    pub num_gt: usize,
}

/// Full evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_class: Vec<ClassEval>,
    pub mean_ap: f64,
}

/// Evaluates detections against ground truth over every class present in
/// the ground truth. Detections of unknown classes are an error.
pub fn evaluate(dets: &[DetectionRecord], gts: &[GtInstance], iou_thr: f64) -> Result<EvalReport> {
    if !(0.0..=1.0).contains(&iou_thr) {
        return Err(Error::InvalidArgument(format!(
            "iou threshold must be within [0, 1], got {iou_thr}"
        )));
    }
    let classes: BTreeSet<u32> = gts.iter().map(|g| g.bbox.class_id).collect();
    if let Some(d) = dets.iter().find(|d| !classes.contains(&d.bbox.class_id)) {
        return Err(Error::InvalidArgument(format!(
            "detection class {} does not appear in the ground truth",
            d.bbox.class_id
        )));
    }
    let mut per_class = Vec::with_capacity(classes.len());
    for &class in &classes {
        let class_dets: Vec<DetectionRecord> =
            dets.iter().filter(|d| d.bbox.class_id == class).cloned().collect();
        let class_gts: Vec<GtInstance> =
            gts.iter().filter(|g| g.bbox.class_id == class).cloned().collect();
        let num_gt = class_gts.iter().filter(|g| !g.difficult).count();
        let outcomes = match_detections(&class_dets, &class_gts, iou_thr);
        let tp_flags: Vec<bool> = outcomes
            .iter()
            .filter_map(|(_, m)| match m {
                MatchOutcome::TruePositive => Some(true),
                MatchOutcome::FalsePositive => Some(false),
                MatchOutcome::Ignored => None,
            })
            .collect();
        let tp = tp_flags.iter().filter(|&&t| t).count();
        per_class.push(ClassEval {
            class_id: class,
            ap: ap_voc07(&tp_flags, num_gt)?,
            true_positives: tp,
            false_positives: tp_flags.len() - tp,
            num_gt,
        });
    }
    let mean = mean_ap(&per_class.iter().map(|c| c.ap).collect::<Vec<_>>());
    Ok(EvalReport { per_class, mean_ap: mean })
}
