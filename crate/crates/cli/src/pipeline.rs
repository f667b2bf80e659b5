//! Glue between file records and the core pipeline: decode paths for maps
//! and raw keypoints, top-k capping, and evaluation reports.

use serde::{Deserialize, Serialize};

use midbox_core::eval::{evaluate, DetectionRecord, GtInstance};
use midbox_core::heatmap::{decode_maps, TargetSet};
use midbox_core::matcher::{decode, CenterDet, Detection, MidpointDet};

use crate::error::{AppError, Result};
use crate::io::records::{ImageRecord, KeypointRecord};

/// Keeps the `topk` best-scoring centers per class, preserving input order
/// among the kept ones (the map path applies the same cap per channel).
pub fn topk_centers(centers: &[CenterDet], topk: usize) -> Vec<CenterDet> {
    topk_by_key(centers, topk, |c| c.class_id as u64, |c| c.score)
}

/// Keeps the `topk` best-scoring midpoints per (class, label) channel.
pub fn topk_midpoints(mids: &[MidpointDet], topk: usize) -> Vec<MidpointDet> {
    topk_by_key(mids, topk, |m| (m.class_id as u64) * 4 + m.label.index() as u64, |m| m.score)
}

fn topk_by_key<T: Clone>(
    items: &[T],
    topk: usize,
    key: impl Fn(&T) -> u64,
    score: impl Fn(&T) -> f64,
) -> Vec<T> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    // Stable sort by score descending; ties keep input order.
    order.sort_by(|&a, &b| score(&items[b]).total_cmp(&score(&items[a])));
    let mut kept_per_key = std::collections::HashMap::new();
    let mut keep = vec![false; items.len()];
    for &i in &order {
        let k = key(&items[i]);
        let n = kept_per_key.entry(k).or_insert(0usize);
        if *n < topk {
            *n += 1;
            keep[i] = true;
        }
    }
    items
        .iter()
        .zip(keep)
        .filter_map(|(item, k)| k.then(|| item.clone()))
        .collect()
}

/// Decodes one keypoint record into detections.
pub fn decode_keypoint_record(
    rec: &KeypointRecord,
    score_thresh: f64,
    topk: usize,
) -> Result<Vec<Detection>> {
    let (centers, mids) = rec.to_dets()?;
    let centers = topk_centers(&centers, topk);
    let mids = topk_midpoints(&mids, topk);
    let (dets, _stats) = decode(&centers, &mids, score_thresh, score_thresh);
    Ok(dets)
}

/// Decodes one target-map set into detections.
pub fn decode_target_maps(
    maps: &TargetSet,
    stride: usize,
    score_thresh: f64,
    topk: usize,
) -> Result<Vec<Detection>> {
    let (centers, mids) = decode_maps(maps, stride, topk, score_thresh, score_thresh)?;
    let (dets, _stats) = decode(&centers, &mids, score_thresh, score_thresh);
    Ok(dets)
}

/// JSON shape of the evaluation report.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ReportJson {
    pub metric: String,
    pub iou_thr: f64,
    pub map: f64,
    pub classes: Vec<ClassReportJson>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ClassReportJson {
    pub class: u32,
    pub ap: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub num_gt: usize,
}

/// Evaluates detection records against ground-truth records.
///
/// Detections referencing image ids absent from the ground truth are an
/// input error, as are detection classes never seen in the ground truth.
pub fn evaluate_records(
    gt: &[ImageRecord],
    det: &[ImageRecord],
    iou_thr: f64,
) -> Result<ReportJson> {
    let gt_ids: std::collections::HashSet<&str> =
        gt.iter().map(|r| r.image.as_str()).collect();
    if let Some(bad) = det.iter().find(|r| !gt_ids.contains(r.image.as_str())) {
        return Err(AppError::input(format!(
            "detection image {:?} does not appear in the ground truth",
            bad.image
        )));
    }
    let gts: Vec<GtInstance> = gt.iter().flat_map(|r| r.gt_instances()).collect();
    let dets: Vec<DetectionRecord> = det.iter().flat_map(|r| r.detection_records()).collect();
    let report = evaluate(&dets, &gts, iou_thr)?;
    Ok(ReportJson {
        metric: "voc07".to_string(),
        iou_thr,
        map: report.mean_ap,
        classes: report
            .per_class
            .iter()
            .map(|c| ClassReportJson {
                class: c.class_id,
                ap: c.ap,
                true_positives: c.true_positives,
                false_positives: c.false_positives,
                num_gt: c.num_gt,
            })
            .collect(),
    })
}
