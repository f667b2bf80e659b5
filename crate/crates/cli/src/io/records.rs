//! JSONL record schemas: annotations, detections, and keypoint dumps.
//!
//! One image per line. Annotation and detection lines share one shape —
//! `{"image", "width", "height", "objects": [...]}` — detections
//! additionally carry a `score` per object. Keypoint lines hold raw center
//! and midpoint candidates, the direct input of the grouping decoder.
//!
//! Serialization is deterministic (fixed field order, no maps), so reading
//! a file produced by this module and writing it back is byte-identical.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use midbox_core::eval::{DetectionRecord, GtInstance};
use midbox_core::geom::{Angle, MidLabel, OrientedBox, Point2, Shift};
use midbox_core::matcher::{CenterDet, Detection, MidpointDet};

use crate::error::{AppError, Result};

fn is_false(b: &bool) -> bool {
    !*b
}

/// One oriented box within an image record.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ObjectRecord {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    /// Radians, canonical (within `[0, pi/2)`) for ground truth.
    pub theta: f64,
    pub class: u32,
    #[serde(default)]
    pub difficult: bool,
    /// Present on detection records only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    /// Set by the tiler when the box extends beyond its tile.
    #[serde(default, skip_serializing_if = "is_false")]
    pub truncated: bool,
}

impl ObjectRecord {
    pub fn from_box(b: &OrientedBox, score: Option<f64>) -> Self {
        ObjectRecord {
            cx: b.center.x,
            cy: b.center.y,
            w: b.w,
            h: b.h,
            theta: b.theta.radians(),
            class: b.class_id,
            difficult: false,
            score,
            truncated: false,
        }
    }

    pub fn to_box(&self) -> OrientedBox {
        OrientedBox::new(Point2::new(self.cx, self.cy), self.w, self.h, Angle::new(self.theta), self.class)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("cx", self.cx),
            ("cy", self.cy),
            ("w", self.w),
            ("h", self.h),
            ("theta", self.theta),
        ] {
            if !v.is_finite() {
                return Err(format!("field {name} is not finite"));
            }
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(format!("extents must be positive, got w={} h={}", self.w, self.h));
        }
        if let Some(s) = self.score {
            if !s.is_finite() || s < 0.0 {
                return Err(format!("score must be finite and non-negative, got {s}"));
            }
        }
        Ok(())
    }
}

/// One image's boxes: the annotation line, and (with scores) the detection line.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ImageRecord {
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<ObjectRecord>,
}

impl ImageRecord {
    pub fn gt_instances(&self) -> Vec<GtInstance> {
        self.objects
            .iter()
            .map(|o| GtInstance {
                image_id: self.image.clone(),
                bbox: o.to_box(),
                difficult: o.difficult,
            })
            .collect()
    }

    pub fn detection_records(&self) -> Vec<DetectionRecord> {
        self.objects
            .iter()
            .map(|o| DetectionRecord {
                image_id: self.image.clone(),
                bbox: o.to_box(),
                score: o.score.unwrap_or(0.0),
            })
            .collect()
    }

    pub fn from_detections(image: &str, width: u32, height: u32, dets: &[Detection]) -> Self {
        ImageRecord {
            image: image.to_string(),
            width,
            height,
            objects: dets
                .iter()
                .map(|d| ObjectRecord::from_box(&d.bbox, Some(d.score)))
                .collect(),
        }
    }
}

/// A center keypoint candidate line item.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CenterKp {
    pub x: f64,
    pub y: f64,
    pub score: f64,
    pub radius: f64,
    pub class: u32,
    /// Index of the generating ground-truth box, when known (synthetic
    /// data provenance; spurious points have none).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<usize>,
}

/// A midpoint keypoint candidate line item.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MidKp {
    /// One of `l`, `t`, `r`, `b`.
    pub label: String,
    pub x: f64,
    pub y: f64,
    pub score: f64,
    /// Centripetal shift magnitudes (non-negative).
    pub dx: f64,
    pub dy: f64,
    pub class: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<usize>,
}

/// One image's raw keypoint candidates.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KeypointRecord {
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub centers: Vec<CenterKp>,
    pub midpoints: Vec<MidKp>,
}

impl KeypointRecord {
    /// Converts the record into decoder inputs (order preserved).
    pub fn to_dets(&self) -> Result<(Vec<CenterDet>, Vec<MidpointDet>)> {
        let centers = self
            .centers
            .iter()
            .map(|c| CenterDet {
                pos: Point2::new(c.x, c.y),
                score: c.score,
                radius: c.radius.max(1.0),
                class_id: c.class,
            })
            .collect();
        let midpoints = self
            .midpoints
            .iter()
            .map(|m| {
                let label = MidLabel::from_short_name(&m.label).ok_or_else(|| {
                    AppError::input(format!(
                        "image {:?}: unknown midpoint label {:?}",
                        self.image, m.label
                    ))
                })?;
                Ok(MidpointDet {
                    label,
                    pos: Point2::new(m.x, m.y),
                    score: m.score,
                    shift: Shift { dx: m.dx.max(0.0), dy: m.dy.max(0.0) },
                    class_id: m.class,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((centers, midpoints))
    }
}

/// Index of the MTF files produced by target encoding.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub stride: u32,
    pub classes: u32,
    pub images: Vec<ManifestImage>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestImage {
    pub image: String,
    /// MTF file name, relative to the manifest's directory.
    pub file: String,
    /// Stacked tensor shape `[C, H, W]`.
    pub shape: [usize; 3],
    pub width: u32,
    pub height: u32,
}

/// Reads a JSONL file, reporting parse failures with 1-based line numbers.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)
        .map_err(|e| AppError::input(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line)
            .map_err(|e| AppError::input(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(item);
    }
    Ok(out)
}

/// Writes items as JSONL with a trailing newline per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path)
        .map_err(|e| AppError::input(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item)
            .map_err(|e| AppError::internal(format!("serialization: {e}")))?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads and validates annotation/detection records.
pub fn read_image_records(path: &Path) -> Result<Vec<ImageRecord>> {
    let records: Vec<ImageRecord> = read_jsonl(path)?;
    for (i, r) in records.iter().enumerate() {
        for o in &r.objects {
            o.validate().map_err(|e| {
                AppError::input(format!("{} line {}: image {:?}: {e}", path.display(), i + 1, r.image))
            })?;
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn object_record_roundtrips_through_box() {
        let b = OrientedBox::new(Point2::new(10.0, 20.0), 8.0, 4.0, Angle::new(0.7), 3);
        let r = ObjectRecord::from_box(&b, Some(0.9));
        let back = r.to_box();
        assert_eq!(back.center, b.center);
        assert_eq!(back.w, b.w);
        assert_eq!(back.theta.radians(), b.theta.radians());
        assert_eq!(back.class_id, 3);
    }

    #[test]
    fn gt_serialization_omits_detection_fields() {
        let b = OrientedBox::new(Point2::new(1.0, 2.0), 3.0, 2.0, Angle::new(0.1), 0);
        let line = serde_json::to_string(&ObjectRecord::from_box(&b, None)).unwrap();
        assert!(!line.contains("score"));
        assert!(!line.contains("truncated"));
        assert!(line.contains("\"difficult\":false"));
    }

    #[test]
    fn jsonl_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            "{\"image\":\"a\",\"width\":10,\"height\":10,\"objects\":[]}\nnot json\n",
        )
        .unwrap();
        let err = read_jsonl::<ImageRecord>(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn invalid_objects_are_rejected_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let rec = ImageRecord {
            image: "a".into(),
            width: 10,
            height: 10,
            objects: vec![ObjectRecord {
                cx: 1.0,
                cy: 1.0,
                w: -3.0,
                h: 2.0,
                theta: 0.0,
                class: 0,
                difficult: false,
                score: None,
                truncated: false,
            }],
        };
        write_jsonl(&path, &[rec]).unwrap();
        let err = read_image_records(&path).unwrap_err();
        assert!(err.to_string().contains("positive"), "{err}");
    }

    #[test]
    fn jsonl_rewrite_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let b = OrientedBox::new(Point2::new(10.5, 20.25), 8.125, 4.0, Angle::new(0.7), 1);
        let recs = vec![ImageRecord {
            image: "img0".into(),
            width: 100,
            height: 80,
            objects: vec![ObjectRecord::from_box(&b, Some(0.875))],
        }];
        write_jsonl(&path, &recs).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        let back: Vec<ImageRecord> = read_jsonl(&path).unwrap();
        assert_eq!(back, recs);
        write_jsonl(&path, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes1);
    }

    #[test]
    fn keypoint_record_converts_to_decoder_inputs() {
        let rec = KeypointRecord {
            image: "i".into(),
            width: 64,
            height: 64,
            centers: vec![CenterKp { x: 5.0, y: 6.0, score: 0.9, radius: 0.2, class: 1, source: Some(0) }],
            midpoints: vec![MidKp {
                label: "t".into(),
                x: 5.0,
                y: 2.0,
                score: 0.8,
                dx: -0.5,
                dy: 4.0,
                class: 1,
                source: None,
            }],
        };
        let (cs, ms) = rec.to_dets().unwrap();
        assert_eq!(cs[0].radius, 1.0); // clamped up
        assert_eq!(ms[0].label, MidLabel::Top);
        assert_eq!(ms[0].shift.dx, 0.0); // negative clamped
        let mut bad = rec;
        bad.midpoints[0].label = "q".into();
        assert!(bad.to_dets().is_err());
    }
}
