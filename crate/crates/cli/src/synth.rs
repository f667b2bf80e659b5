//! Seeded synthetic scenes: ground-truth boxes plus noisy keypoint
//! candidates, the test bed for the grouping decoder.
//!
//! Layouts are either uniformly random boxes or harbor rows — parallel
//! ships berthed side by side with a fixed hull gap, rows stacked along the
//! ship axis — the crowded arrangement that stresses center/midpoint
//! assignment the hardest.
//!
//! The noise model perturbs exact keypoints: independent drops, isotropic
//! Gaussian position jitter, the same jitter on shift magnitudes, a score
//! that decays with the jitter actually applied,
//! `clamp(1 - |jitter| / (6 sigma + eps), floor, 1)`, and uniformly placed
//! spurious points with scores at most `spurious_score_max`. Every image
//! draws from its own stream seeded from the master seed, so output is
//! byte-identical for a fixed spec regardless of scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use midbox_core::geom::{box_to_keypoints, canonicalize, Angle, MidLabel, OrientedBox, Point2};

use crate::error::{AppError, Result};
use crate::io::records::{CenterKp, ImageRecord, KeypointRecord, MidKp, ObjectRecord};

/// Object placement scheme.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// Independent boxes anywhere fully inside the canvas.
    Random,
    /// Parallel ships in rows: hulls `gap` pixels apart within a row, rows
    /// `gap` pixels apart along the ship axis, fleet centered on the canvas.
    HarborRows { gap: f64, per_row: usize },
}

/// Keypoint corruption parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct NoiseSpec {
    /// Isotropic Gaussian jitter (pixels) on positions and shifts.
    pub jitter_sigma: f64,
    /// Probability of dropping each keypoint independently.
    pub drop_prob: f64,
    /// Expected spurious keypoints per image.
    pub spurious_rate: f64,
    /// Lower clamp of the score model.
    pub score_floor: f64,
    /// Upper bound of spurious-point scores.
    pub spurious_score_max: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            jitter_sigma: 0.0,
            drop_prob: 0.0,
            spurious_rate: 0.0,
            score_floor: 0.05,
            spurious_score_max: 0.3,
        }
    }
}

/// Full scene-generation spec; serializable so runs are reproducible from
/// a single JSON file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    /// Number of images to generate.
    pub images: usize,
    /// Number of object classes.
    pub classes: u32,
    /// Objects per image.
    pub objects: usize,
    pub layout: Layout,
    /// Box long-side range (ship length), pixels.
    pub length_range: [f64; 2],
    /// Box short-side range (ship breadth), pixels.
    pub breadth_range: [f64; 2],
    /// Orientation range, radians; sampled uniformly.
    pub angle_range: [f64; 2],
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 768,
            height: 768,
            images: 1,
            classes: 1,
            objects: 10,
            layout: Layout::Random,
            length_range: [60.0, 120.0],
            breadth_range: [20.0, 40.0],
            angle_range: [0.0, std::f64::consts::PI],
            noise: NoiseSpec::default(),
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(AppError::input("canvas size must be positive"));
        }
        if self.classes == 0 {
            return Err(AppError::input("classes must be at least 1"));
        }
        for (name, [lo, hi]) in [
            ("length_range", self.length_range),
            ("breadth_range", self.breadth_range),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi < lo {
                return Err(AppError::input(format!("{name} must satisfy 0 < lo <= hi")));
            }
        }
        let [alo, ahi] = self.angle_range;
        if !(alo.is_finite() && ahi.is_finite()) || ahi < alo {
            return Err(AppError::input("angle_range must be finite with lo <= hi"));
        }
        let n = &self.noise;
        if !(0.0..=1.0).contains(&n.drop_prob) {
            return Err(AppError::input("drop_prob must lie in [0, 1]"));
        }
        if n.jitter_sigma < 0.0 || !n.jitter_sigma.is_finite() {
            return Err(AppError::input("jitter_sigma must be non-negative"));
        }
        if n.spurious_rate < 0.0 || !n.spurious_rate.is_finite() {
            return Err(AppError::input("spurious_rate must be non-negative"));
        }
        if !(0.0..=1.0).contains(&n.score_floor) || !(0.0..=1.0).contains(&n.spurious_score_max) {
            return Err(AppError::input("score parameters must lie in [0, 1]"));
        }
        if let Layout::HarborRows { gap, per_row } = self.layout {
            if per_row == 0 {
                return Err(AppError::input("per_row must be at least 1"));
            }
            if gap < 0.0 || !gap.is_finite() {
                return Err(AppError::input("gap must be non-negative"));
            }
        }
        Ok(())
    }
}

/// One generated image: its ground truth and its noisy keypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub annotation: ImageRecord,
    pub keypoints: KeypointRecord,
}

/// SplitMix64 output function; used to derive per-image seeds.
pub fn splitmix64(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] >= range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..range[1])
    }
}

/// Generates all scenes of the spec. Images are processed in parallel but
/// each draws from its own seeded stream, so results only depend on the
/// spec.
pub fn generate(spec: &SceneSpec) -> Result<Vec<Scene>> {
    spec.validate()?;
    (0..spec.images)
        .into_par_iter()
        .map(|i| {
            let seed = splitmix64(spec.seed.wrapping_add(i as u64));
            generate_image(spec, i, seed)
        })
        .collect()
}

fn generate_image(spec: &SceneSpec, index: usize, seed: u64) -> Result<Scene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boxes = match spec.layout {
        Layout::Random => random_layout(spec, &mut rng)?,
        Layout::HarborRows { gap, per_row } => harbor_layout(spec, gap, per_row, &mut rng)?,
    };

    let image = format!("img{index:05}");
    let mut objects = Vec::with_capacity(boxes.len());
    for b in &boxes {
        let canon = canonicalize(b)?;
        objects.push(ObjectRecord::from_box(&canon, None));
    }
    let annotation = ImageRecord {
        image: image.clone(),
        width: spec.width,
        height: spec.height,
        objects,
    };

    let keypoints = corrupt_keypoints(spec, &image, &boxes, &mut rng)?;
    Ok(Scene { annotation, keypoints })
}

fn random_layout(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Result<Vec<OrientedBox>> {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let mut boxes = Vec::with_capacity(spec.objects);
    for _ in 0..spec.objects {
        let len = uniform(rng, spec.length_range);
        let breadth = uniform(rng, spec.breadth_range);
        let theta = Angle::new(uniform(rng, spec.angle_range));
        let (s, c) = theta.radians().sin_cos();
        // Half extents of the axis-aligned bounds of the rotated box.
        let hx = 0.5 * len * c.abs() + 0.5 * breadth * s.abs();
        let hy = 0.5 * len * s.abs() + 0.5 * breadth * c.abs();
        if 2.0 * hx > w || 2.0 * hy > h {
            return Err(AppError::input(format!(
                "canvas {}x{} cannot fit a {len:.1}x{breadth:.1} box at angle {:.3}",
                spec.width,
                spec.height,
                theta.radians()
            )));
        }
        let cx = uniform(rng, [hx, w - hx]);
        let cy = uniform(rng, [hy, h - hy]);
        let class = rng.gen_range(0..spec.classes);
        boxes.push(OrientedBox::new(Point2::new(cx, cy), len, breadth, theta, class));
    }
    Ok(boxes)
}

fn harbor_layout(
    spec: &SceneSpec,
    gap: f64,
    per_row: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<OrientedBox>> {
    let theta = Angle::new(uniform(rng, spec.angle_range));
    let u = theta.dir(); // ship axis
    let v = theta.perp_dir(); // breadth direction

    // Draw all hull sizes first; geometry follows from them.
    let sizes: Vec<(f64, f64)> = (0..spec.objects)
        .map(|_| (uniform(rng, spec.length_range), uniform(rng, spec.breadth_range)))
        .collect();

    // Positions in fleet coordinates: `along` follows the ship axis (row
    // placement), `across` the breadth direction (within-row placement).
    let rows: Vec<&[(f64, f64)]> = sizes.chunks(per_row).collect();
    let mut placements = Vec::with_capacity(spec.objects);
    let mut along = 0.0;
    for (ri, row) in rows.iter().enumerate() {
        let row_len = row.iter().map(|s| s.0).fold(0.0, f64::max);
        if ri > 0 {
            along += gap + row_len * 0.5;
        } else {
            along += row_len * 0.5;
        }
        let mut across = 0.0;
        for (si, &(len, breadth)) in row.iter().enumerate() {
            if si > 0 {
                across += gap + breadth * 0.5;
            } else {
                across += breadth * 0.5;
            }
            placements.push((along, across, len, breadth));
            across += breadth * 0.5;
        }
        along += row_len * 0.5;
    }

    // Center the fleet on the canvas.
    let mean_along = placements.iter().map(|p| p.0).sum::<f64>() / placements.len().max(1) as f64;
    let mean_across = placements.iter().map(|p| p.1).sum::<f64>() / placements.len().max(1) as f64;
    let canvas_center = Point2::new(spec.width as f64 * 0.5, spec.height as f64 * 0.5);

    let mut boxes = Vec::with_capacity(spec.objects);
    for (i, &(along, across, len, breadth)) in placements.iter().enumerate() {
        let center = canvas_center + u * (along - mean_along) + v * (across - mean_across);
        let b = OrientedBox::new(center, len, breadth, theta, i as u32 % spec.classes);
        for corner in b.corners() {
            let inside = corner.x >= 0.0
                && corner.x <= spec.width as f64
                && corner.y >= 0.0
                && corner.y <= spec.height as f64;
            if !inside {
                return Err(AppError::input(format!(
                    "infeasible harbor layout: ship {i} leaves the {}x{} canvas",
                    spec.width, spec.height
                )));
            }
        }
        boxes.push(b);
    }
    Ok(boxes)
}

fn corrupt_keypoints(
    spec: &SceneSpec,
    image: &str,
    boxes: &[OrientedBox],
    rng: &mut ChaCha8Rng,
) -> Result<KeypointRecord> {
    let noise = &spec.noise;
    let sigma = noise.jitter_sigma;
    let normal = if sigma > 0.0 {
        Some(Normal::new(0.0, sigma).map_err(|e| AppError::internal(e.to_string()))?)
    } else {
        None
    };
    // Score decays with the jitter actually applied; eps keeps the
    // noiseless case at exactly 1.
    let score_of = |jx: f64, jy: f64| {
        (1.0 - jx.hypot(jy) / (6.0 * sigma + 1e-9)).clamp(noise.score_floor, 1.0)
    };
    let draw = |rng: &mut ChaCha8Rng| match &normal {
        Some(n) => (n.sample(rng), n.sample(rng)),
        None => (0.0, 0.0),
    };

    let mut centers = Vec::new();
    let mut midpoints = Vec::new();
    for (oi, b) in boxes.iter().enumerate() {
        let kp = box_to_keypoints(b)?;
        for (li, &label) in MidLabel::ALL.iter().enumerate() {
            let dropped = rng.gen::<f64>() < noise.drop_prob;
            let (jx, jy) = draw(rng);
            let (sx, sy) = draw(rng);
            if dropped {
                continue;
            }
            midpoints.push(MidKp {
                label: label.short_name().to_string(),
                x: kp.midpoints[li].x + jx,
                y: kp.midpoints[li].y + jy,
                score: score_of(jx, jy),
                dx: (kp.shifts[li].dx + sx).max(0.0),
                dy: (kp.shifts[li].dy + sy).max(0.0),
                class: b.class_id,
                source: Some(oi),
            });
        }
        let dropped = rng.gen::<f64>() < noise.drop_prob;
        let (jx, jy) = draw(rng);
        if !dropped {
            centers.push(CenterKp {
                x: kp.center.x + jx,
                y: kp.center.y + jy,
                score: score_of(jx, jy),
                radius: kp.radius,
                class: b.class_id,
                source: Some(oi),
            });
        }
    }

    let spurious = noise.spurious_rate.floor() as usize
        + usize::from(rng.gen::<f64>() < noise.spurious_rate.fract());
    for _ in 0..spurious {
        let role = rng.gen_range(0..5u8);
        let x = uniform(rng, [0.0, spec.width as f64]);
        let y = uniform(rng, [0.0, spec.height as f64]);
        let score = uniform(rng, [noise.score_floor, noise.spurious_score_max]);
        let class = rng.gen_range(0..spec.classes);
        if role < 4 {
            midpoints.push(MidKp {
                label: MidLabel::from_index(role as usize).unwrap().short_name().to_string(),
                x,
                y,
                score,
                dx: uniform(rng, [0.0, 20.0]),
                dy: uniform(rng, [0.0, 20.0]),
                class,
                source: None,
            });
        } else {
            centers.push(CenterKp {
                x,
                y,
                score,
                radius: uniform(rng, [1.0, 20.0]),
                class,
                source: None,
            });
        }
    }

    Ok(KeypointRecord {
        image: image.to_string(),
        width: spec.width,
        height: spec.height,
        centers,
        midpoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use midbox_core::eval::rotated_iou;
    use midbox_core::matcher::decode;

    fn harbor_spec(objects: usize, per_row: usize, seed: u64) -> SceneSpec {
        SceneSpec {
            objects,
            images: 2,
            layout: Layout::HarborRows { gap: 5.0, per_row },
            length_range: [60.0, 60.0],
            breadth_range: [20.0, 20.0],
            seed,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SceneSpec { images: 3, objects: 6, seed: 99, ..SceneSpec::default() };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
        let other = generate(&SceneSpec { seed: 100, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn noiseless_scenes_decode_to_ground_truth() {
        let spec = harbor_spec(12, 4, 7);
        for scene in generate(&spec).unwrap() {
            let (centers, mids) = scene.keypoints.to_dets().unwrap();
            let (dets, stats) = decode(&centers, &mids, 0.1, 0.1);
            assert_eq!(stats.dropped, 0);
            assert_eq!(dets.len(), scene.annotation.objects.len());
            for obj in &scene.annotation.objects {
                let gt = obj.to_box();
                let best = dets.iter().map(|d| rotated_iou(&d.bbox, &gt)).fold(0.0, f64::max);
                assert!(best >= 0.999, "best iou {best}");
            }
        }
    }

    #[test]
    fn harbor_rows_keep_exact_gaps() {
        let spec = harbor_spec(8, 4, 3);
        let scene = &generate(&spec).unwrap()[0];
        let boxes: Vec<_> = scene.annotation.objects.iter().map(|o| o.to_box()).collect();
        // Within a row, adjacent centers are breadth + gap apart.
        for pair in boxes[..4].windows(2) {
            let d = pair[0].center.dist(pair[1].center);
            assert!((d - 25.0).abs() < 1e-9, "distance {d}");
        }
        // All ships share one orientation (possibly with extents swapped in
        // canonical form; equal sizes here keep theta identical).
        for b in &boxes[1..] {
            assert!(b.theta.dist(boxes[0].theta) < 1e-12);
        }
    }

    #[test]
    fn infeasible_harbor_is_an_input_error() {
        let spec = SceneSpec {
            width: 100,
            height: 100,
            ..harbor_spec(50, 10, 1)
        };
        let err = generate(&spec).unwrap_err();
        assert!(err.to_string().contains("infeasible"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn random_layout_stays_inside_canvas() {
        let spec = SceneSpec { images: 4, objects: 20, seed: 5, ..SceneSpec::default() };
        for scene in generate(&spec).unwrap() {
            for o in &scene.annotation.objects {
                for corner in o.to_box().corners() {
                    assert!(corner.x >= -1e-9 && corner.x <= spec.width as f64 + 1e-9);
                    assert!(corner.y >= -1e-9 && corner.y <= spec.height as f64 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn noise_knobs_do_what_they_say() {
        // Full drop leaves only spurious points, whose count is exact for
        // integer rates.
        let spec = SceneSpec {
            objects: 4,
            noise: NoiseSpec { drop_prob: 1.0, spurious_rate: 3.0, ..NoiseSpec::default() },
            ..SceneSpec::default()
        };
        let scene = &generate(&spec).unwrap()[0];
        let kp = &scene.keypoints;
        assert_eq!(kp.centers.len() + kp.midpoints.len(), 3);
        assert!(kp.centers.iter().all(|c| c.source.is_none() && c.score <= 0.3));
        assert!(kp.midpoints.iter().all(|m| m.source.is_none() && m.score <= 0.3));

        // Jitter lowers scores below 1 but never below the floor.
        let spec = SceneSpec {
            objects: 6,
            noise: NoiseSpec { jitter_sigma: 3.0, ..NoiseSpec::default() },
            seed: 11,
            ..SceneSpec::default()
        };
        let scene = &generate(&spec).unwrap()[0];
        for c in &scene.keypoints.centers {
            assert!(c.score >= 0.05 && c.score < 1.0);
        }

        // Noiseless scores are exactly 1.
        let spec = SceneSpec { objects: 3, seed: 2, ..SceneSpec::default() };
        let scene = &generate(&spec).unwrap()[0];
        assert!(scene.keypoints.centers.iter().all(|c| c.score == 1.0));
        assert!(scene.keypoints.midpoints.iter().all(|m| m.score == 1.0));
    }

    #[test]
    fn layout_is_invariant_to_noise_settings() {
        let mk = |sigma: f64| SceneSpec {
            objects: 8,
            seed: 21,
            noise: NoiseSpec { jitter_sigma: sigma, ..NoiseSpec::default() },
            ..SceneSpec::default()
        };
        let clean = generate(&mk(0.0)).unwrap();
        let noisy = generate(&mk(2.0)).unwrap();
        assert_eq!(clean[0].annotation, noisy[0].annotation);
        assert_ne!(clean[0].keypoints, noisy[0].keypoints);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = SceneSpec {
            noise: NoiseSpec { drop_prob: 1.5, ..NoiseSpec::default() },
            ..SceneSpec::default()
        };
        assert!(generate(&bad).is_err());
        let bad = SceneSpec { length_range: [0.0, 10.0], ..SceneSpec::default() };
        assert!(generate(&bad).is_err());
        let bad = SceneSpec { layout: Layout::HarborRows { gap: 5.0, per_row: 0 }, ..SceneSpec::default() };
        assert!(generate(&bad).is_err());
    }
}
