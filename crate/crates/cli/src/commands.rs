//! The five pipeline commands behind the CLI surface.
//!
//! Images are processed in parallel where it pays off, but outputs are
//! always emitted in input order, so every command is deterministic given
//! its arguments (and seed).

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use midbox_core::geom::{MidLabel, OrientedBox};
use midbox_core::heatmap::{encode_targets, render_gaussian_peak, EncodeStats, TargetSet};

use crate::error::{AppError, Result};
use crate::io::mtf::{read_mtf, write_mtf};
use crate::io::records::{
    read_image_records, read_jsonl, write_jsonl, ImageRecord, KeypointRecord, Manifest,
    ManifestImage,
};
use crate::pipeline::{decode_keypoint_record, decode_target_maps, evaluate_records};
use crate::synth::{generate, SceneSpec};
use crate::tile::{tile_records, TileSpec};

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '.' | '_') { c } else { '_' })
        .collect()
}

fn write_json_pretty(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| AppError::internal(format!("serialization: {e}")))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| AppError::input(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::input(format!("cannot open {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| AppError::input(format!("{}: {e}", path.display())))
}

/// Renders annotations into per-image target maps plus a manifest.
pub fn cmd_encode(ann: &Path, out_dir: &Path, stride: u32, classes: Option<u32>) -> Result<()> {
    if stride == 0 {
        return Err(AppError::input("stride must be positive"));
    }
    let records = read_image_records(ann)?;
    let inferred = records
        .iter()
        .flat_map(|r| r.objects.iter().map(|o| o.class + 1))
        .max()
        .unwrap_or(1);
    let classes = classes.unwrap_or(inferred);
    if classes == 0 || classes < inferred {
        return Err(AppError::input(format!(
            "--classes {classes} cannot hold class ids up to {}",
            inferred - 1
        )));
    }
    fs::create_dir_all(out_dir)
        .map_err(|e| AppError::input(format!("cannot create {}: {e}", out_dir.display())))?;

    let results: Vec<(ManifestImage, EncodeStats)> = records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| {
            let boxes: Vec<OrientedBox> = rec.objects.iter().map(|o| o.to_box()).collect();
            let (targets, stats) = encode_targets(
                &boxes,
                (rec.width as usize, rec.height as usize),
                stride as usize,
                classes as usize,
            )?;
            let (tensor, names) = targets.to_stacked()?;
            let file = format!("{i:05}_{}.mtf", sanitize(&rec.image));
            write_mtf(&out_dir.join(&file), &tensor, &names)?;
            let entry = ManifestImage {
                image: rec.image.clone(),
                file,
                shape: tensor.shape(),
                width: rec.width,
                height: rec.height,
            };
            Ok((entry, stats))
        })
        .collect::<Result<Vec<_>>>()?;

    let skipped: usize = results.iter().map(|(_, s)| s.skipped_boxes).sum();
    let clamped: usize = results.iter().map(|(_, s)| s.clamped_keypoints).sum();
    if skipped > 0 || clamped > 0 {
        eprintln!("encode: skipped {skipped} degenerate boxes, clamped {clamped} keypoints");
    }
    let manifest = Manifest {
        stride,
        classes,
        images: results.into_iter().map(|(e, _)| e).collect(),
    };
    write_json_pretty(&out_dir.join("manifest.json"), &manifest)
}

/// Decodes detections from a manifest, a single MTF file, or keypoint JSONL.
pub fn cmd_decode(
    input: &Path,
    out: &Path,
    stride: u32,
    score_thresh: f64,
    topk: usize,
) -> Result<()> {
    if stride == 0 {
        return Err(AppError::input("stride must be positive"));
    }
    let ext = input.extension().and_then(|e| e.to_str()).unwrap_or("");
    let records: Vec<ImageRecord> = match ext {
        "json" => {
            let manifest: Manifest = read_json(input)?;
            let dir = input.parent().unwrap_or(Path::new("."));
            manifest
                .images
                .par_iter()
                .map(|entry| {
                    let (tensor, names) = read_mtf(&dir.join(&entry.file))?;
                    if tensor.shape() != entry.shape {
                        return Err(AppError::input(format!(
                            "{}: shape {:?} does not match manifest {:?}",
                            entry.file,
                            tensor.shape(),
                            entry.shape
                        )));
                    }
                    let maps = TargetSet::from_stacked(&tensor, Some(&names))?;
                    let dets =
                        decode_target_maps(&maps, manifest.stride as usize, score_thresh, topk)?;
                    Ok(ImageRecord::from_detections(&entry.image, entry.width, entry.height, &dets))
                })
                .collect::<Result<Vec<_>>>()?
        }
        "mtf" => {
            let (tensor, names) = read_mtf(input)?;
            let maps = TargetSet::from_stacked(&tensor, Some(&names))?;
            let dets = decode_target_maps(&maps, stride as usize, score_thresh, topk)?;
            let image = input
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("image")
                .to_string();
            let [_, h, w] = tensor.shape();
            vec![ImageRecord::from_detections(
                &image,
                (w * stride as usize) as u32,
                (h * stride as usize) as u32,
                &dets,
            )]
        }
        "jsonl" => {
            let keypoints: Vec<KeypointRecord> = read_jsonl(input)?;
            keypoints
                .par_iter()
                .map(|rec| {
                    let dets = decode_keypoint_record(rec, score_thresh, topk)?;
                    Ok(ImageRecord::from_detections(&rec.image, rec.width, rec.height, &dets))
                })
                .collect::<Result<Vec<_>>>()?
        }
        other => {
            return Err(AppError::input(format!(
                "cannot tell input kind from extension {other:?} (expected .json manifest, .mtf, or .jsonl keypoints)"
            )));
        }
    };
    write_jsonl(out, &records)
}

/// Scores detections against ground truth and emits a JSON report.
pub fn cmd_eval(gt: &Path, det: &Path, iou_thr: f64, out: Option<&Path>) -> Result<()> {
    let gt_records = read_image_records(gt)?;
    let det_records = read_image_records(det)?;
    let report = evaluate_records(&gt_records, &det_records, iou_thr)?;
    match out {
        Some(path) => write_json_pretty(path, &report),
        None => {
            let mut text = serde_json::to_string_pretty(&report)
                .map_err(|e| AppError::internal(format!("serialization: {e}")))?;
            text.push('\n');
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Generates synthetic scenes: ground truth, keypoints, optionally maps.
pub fn cmd_synth(
    spec_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    emit_mtf: bool,
    stride: u32,
) -> Result<()> {
    let mut spec: SceneSpec = read_json(spec_path)?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let scenes = generate(&spec)?;
    fs::create_dir_all(out_dir)
        .map_err(|e| AppError::input(format!("cannot create {}: {e}", out_dir.display())))?;
    let annotations: Vec<&ImageRecord> = scenes.iter().map(|s| &s.annotation).collect();
    let keypoints: Vec<&KeypointRecord> = scenes.iter().map(|s| &s.keypoints).collect();
    write_jsonl(&out_dir.join("gt.jsonl"), &annotations)?;
    write_jsonl(&out_dir.join("keypoints.jsonl"), &keypoints)?;

    if emit_mtf {
        if stride == 0 {
            return Err(AppError::input("stride must be positive"));
        }
        let maps_dir = out_dir.join("maps");
        fs::create_dir_all(&maps_dir)
            .map_err(|e| AppError::input(format!("cannot create {}: {e}", maps_dir.display())))?;
        let entries: Vec<ManifestImage> = scenes
            .par_iter()
            .enumerate()
            .map(|(i, scene)| {
                let targets = render_keypoint_maps(&scene.keypoints, stride, spec.classes)?;
                let (tensor, names) = targets.to_stacked()?;
                let file = format!("{i:05}_{}.mtf", sanitize(&scene.keypoints.image));
                write_mtf(&maps_dir.join(&file), &tensor, &names)?;
                Ok(ManifestImage {
                    image: scene.keypoints.image.clone(),
                    file,
                    shape: tensor.shape(),
                    width: spec.width,
                    height: spec.height,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = Manifest { stride, classes: spec.classes, images: entries };
        write_json_pretty(&maps_dir.join("manifest.json"), &manifest)?;
    }
    Ok(())
}

/// Rasterizes noisy keypoint candidates into prediction-like maps: Gaussian
/// bumps whose peak is the candidate score, regression values written at
/// the peak pixel. Decoding these maps quantizes positions to the grid, so
/// this path is lossier than the keypoint JSONL it derives from.
fn render_keypoint_maps(rec: &KeypointRecord, stride: u32, classes: u32) -> Result<TargetSet> {
    let s = stride as f64;
    let gw = (rec.width as usize).div_ceil(stride as usize);
    let gh = (rec.height as usize).div_ceil(stride as usize);
    let mut ts = TargetSet::zeros(classes as usize, gh, gw);
    let pixel = |x: f64, y: f64| {
        let px = ((x / s).floor() as i64).clamp(0, gw as i64 - 1);
        let py = ((y / s).floor() as i64).clamp(0, gh as i64 - 1);
        (px, py)
    };
    for c in &rec.centers {
        if c.class >= classes {
            return Err(AppError::input(format!(
                "center class {} out of range for {classes} classes",
                c.class
            )));
        }
        let (px, py) = pixel(c.x, c.y);
        let sigma = (c.radius / (3.0 * s)).max(1.0);
        render_gaussian_peak(&mut ts.center_heat, c.class as usize, px, py, sigma, c.score);
        ts.radius_map.set(0, py as usize, px as usize, (c.radius / s) as f32);
        ts.pos_mask.set(4, py as usize, px as usize, 1.0);
    }
    for m in &rec.midpoints {
        if m.class >= classes {
            return Err(AppError::input(format!(
                "midpoint class {} out of range for {classes} classes",
                m.class
            )));
        }
        let label = MidLabel::from_short_name(&m.label)
            .ok_or_else(|| AppError::input(format!("unknown midpoint label {:?}", m.label)))?;
        let li = label.index();
        let (px, py) = pixel(m.x, m.y);
        let channel = m.class as usize * 4 + li;
        // Sigma from the shift scale: roughly the distance to the center.
        let sigma = (m.dx.hypot(m.dy) / (3.0 * s)).max(1.0);
        render_gaussian_peak(&mut ts.mid_heat, channel, px, py, sigma, m.score);
        ts.shift_map.set(2 * li, py as usize, px as usize, (m.dx / s) as f32);
        ts.shift_map.set(2 * li + 1, py as usize, px as usize, (m.dy / s) as f32);
        ts.pos_mask.set(li, py as usize, px as usize, 1.0);
    }
    Ok(ts)
}

/// Splits annotations into overlapping tiles.
pub fn cmd_tile(ann: &Path, out: &Path, size: u32, overlap: u32) -> Result<()> {
    let records = read_image_records(ann)?;
    let tiled = tile_records(&records, &TileSpec { size, overlap })?;
    write_jsonl(out, &tiled)
}
