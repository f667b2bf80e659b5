//! Acceptance suite: one test per headline guarantee, each printing a
//! single `[ACCEPT] <name>: PASS/FAIL (<metrics>)` line.
//!
//! Every check is scored against an oracle implemented independently in
//! this file (dense grid search, Monte-Carlo rasterization, finite
//! differences, brute-force assignment, naive dense convolution) rather
//! than against the code under test.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use midbox_core::eval::{ap_voc07, rotated_iou};
use midbox_core::geom::{
    box_to_keypoints, build_box_simple, orientation_objective, refine_and_build, refine_center,
    solve_orientation, Angle, MidLabel, OrientedBox, Point2,
};
use midbox_core::heatmap::{total_loss, LossParts, LossWeights};
use midbox_core::matcher::{decode, group, CenterDet, Detection, MidpointDet};
use midbox_core::symdcn::{
    deform_conv, deform_conv_grad, symmetric_pair_forward, FeatureMap, Kernel, OffsetField,
};

use midbox::io::records::ImageRecord;
use midbox::pipeline::evaluate_records;
use midbox::synth::{generate, Layout, NoiseSpec, SceneSpec};

fn accept(name: &str, pass: bool, detail: String) {
    println!("[ACCEPT] {name}: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "[ACCEPT] {name}: FAIL ({detail})");
}

// ---------------------------------------------------------------------------
// 1. Round-trip fidelity: encode to keypoints, rebuild, compare.
// ---------------------------------------------------------------------------

#[test]
fn c1_round_trip_fidelity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let n = 10_000;
    let mut min_iou = f64::INFINITY;
    let mut max_angle_err = 0.0_f64;
    for _ in 0..n {
        let b = OrientedBox::new(
            Point2::new(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0)),
            rng.gen_range(8.0..400.0),
            rng.gen_range(8.0..400.0),
            Angle::new(rng.gen_range(0.0..std::f64::consts::FRAC_PI_2)),
            0,
        );
        let kp = box_to_keypoints(&b).unwrap();
        let five = [
            (kp.shifted(MidLabel::Left), kp.scores[0]),
            (kp.shifted(MidLabel::Top), kp.scores[1]),
            (kp.shifted(MidLabel::Right), kp.scores[2]),
            (kp.shifted(MidLabel::Bottom), kp.scores[3]),
            (kp.center, kp.center_score),
        ];
        let center = refine_center(&five).unwrap();
        let theta = solve_orientation(center, &kp.midpoints).unwrap();
        let mids = [
            (kp.midpoints[0], kp.scores[0]),
            (kp.midpoints[1], kp.scores[1]),
            (kp.midpoints[2], kp.scores[2]),
            (kp.midpoints[3], kp.scores[3]),
        ];
        let (rebuilt, _score) =
            refine_and_build(center, kp.center_score, theta, &mids, b.class_id).unwrap();
        min_iou = min_iou.min(rotated_iou(&rebuilt, &b));
        max_angle_err = max_angle_err.max(theta.dist(b.theta));
    }
    let elapsed = start.elapsed().as_secs_f64();
    accept(
        "round-trip fidelity",
        min_iou >= 0.999 && max_angle_err <= 1e-4 && elapsed < 30.0,
        format!("n={n}, min IoU={min_iou:.6}, max angle err={max_angle_err:.2e}, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// 2. Orientation solver vs a dense-grid oracle at 1e-5 rad resolution.
// ---------------------------------------------------------------------------

/// Independent objective: summed distances of the horizontal pair to the
/// axis at `t` and of the vertical pair to the perpendicular axis, each
/// line through `c` with a unit normal.
fn objective_oracle(t: f64, c: Point2, mids: &[Point2; 4]) -> f64 {
    let (s, co) = t.sin_cos();
    // Axis 1 direction (co, s): normal (-s, co). Axis 2 normal (co, s).
    let d1 = |p: Point2| (-(p.x - c.x) * s + (p.y - c.y) * co).abs();
    let d2 = |p: Point2| ((p.x - c.x) * co + (p.y - c.y) * s).abs();
    d1(mids[0]) + d1(mids[2]) + d2(mids[1]) + d2(mids[3])
}

#[test]
fn c2_orientation_objective_vs_dense_grid() {
    let start = Instant::now();
    let sigmas = [0.5, 2.0, 5.0];
    let configs = 1000;
    let worst_gap = (0..configs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(0xC2_0000 + i as u64);
            let b = OrientedBox::new(
                Point2::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0)),
                rng.gen_range(12.0..200.0),
                rng.gen_range(12.0..200.0),
                Angle::new(rng.gen_range(0.0..std::f64::consts::PI)),
                0,
            );
            let sigma = sigmas[i % sigmas.len()];
            let kp = box_to_keypoints(&b).unwrap();
            let mut mids = kp.midpoints;
            for m in &mut mids {
                // Box-Muller keeps the oracle free of extra dependencies.
                let (u1, u2) = (rng.gen_range(1e-12..1.0_f64), rng.gen_range(0.0..1.0_f64));
                let r = sigma * (-2.0 * u1.ln()).sqrt();
                let phi = 2.0 * std::f64::consts::PI * u2;
                m.x += r * phi.cos();
                m.y += r * phi.sin();
            }
            let solved = solve_orientation(kp.center, &mids).unwrap();
            let f_solved = orientation_objective(solved, kp.center, &mids);

            let step = 1e-5;
            let steps = (std::f64::consts::PI / step).ceil() as usize;
            let mut f_grid = f64::INFINITY;
            for k in 0..steps {
                let f = objective_oracle(k as f64 * step, kp.center, &mids);
                if f < f_grid {
                    f_grid = f;
                }
            }
            f_solved - f_grid
        })
        .reduce(|| f64::NEG_INFINITY, f64::max);
    let elapsed = start.elapsed().as_secs_f64();
    accept(
        "orientation solver vs dense grid",
        worst_gap <= 1e-9 && elapsed < 120.0,
        format!("configs={configs}, sigmas={sigmas:?}, worst gap={worst_gap:.2e}, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// 3. Rotated IoU vs Monte-Carlo rasterization.
// ---------------------------------------------------------------------------

fn point_in_box(b: &OrientedBox, p: Point2) -> bool {
    let d = p - b.center;
    let (s, c) = b.theta.radians().sin_cos();
    (d.x * c + d.y * s).abs() <= 0.5 * b.w && (-d.x * s + d.y * c).abs() <= 0.5 * b.h
}

fn bounds(b: &OrientedBox) -> (f64, f64, f64, f64) {
    let (s, c) = b.theta.radians().sin_cos();
    let hx = 0.5 * b.w * c.abs() + 0.5 * b.h * s.abs();
    let hy = 0.5 * b.w * s.abs() + 0.5 * b.h * c.abs();
    (b.center.x - hx, b.center.x + hx, b.center.y - hy, b.center.y + hy)
}

fn mc_iou(a: &OrientedBox, b: &OrientedBox, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
    let (ax0, ax1, ay0, ay1) = bounds(a);
    let (bx0, bx1, by0, by1) = bounds(b);
    let (x0, x1) = (ax0.min(bx0), ax1.max(bx1));
    let (y0, y1) = (ay0.min(by0), ay1.max(by1));
    let (mut na, mut nb, mut nab) = (0u64, 0u64, 0u64);
    for _ in 0..samples {
        let p = Point2::new(rng.gen_range(x0..x1), rng.gen_range(y0..y1));
        let ia = point_in_box(a, p);
        let ib = point_in_box(b, p);
        na += ia as u64;
        nb += ib as u64;
        nab += (ia && ib) as u64;
    }
    if na + nb == 0 {
        return 0.0;
    }
    nab as f64 / (na + nb - nab) as f64
}

#[test]
fn c3_rotated_iou_vs_monte_carlo() {
    let pairs = 200;
    let samples = 1_000_000;
    let worst = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(0xC3_0000 + i as u64);
            let a = OrientedBox::new(
                Point2::new(rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)),
                rng.gen_range(4.0..40.0),
                rng.gen_range(4.0..40.0),
                Angle::new(rng.gen_range(0.0..std::f64::consts::PI)),
                0,
            );
            let b = if i % 4 == 3 {
                OrientedBox::new(
                    Point2::new(rng.gen_range(-60.0..60.0), rng.gen_range(-60.0..60.0)),
                    rng.gen_range(4.0..40.0),
                    rng.gen_range(4.0..40.0),
                    Angle::new(rng.gen_range(0.0..std::f64::consts::PI)),
                    0,
                )
            } else {
                OrientedBox::new(
                    Point2::new(
                        a.center.x + rng.gen_range(-12.0..12.0),
                        a.center.y + rng.gen_range(-12.0..12.0),
                    ),
                    (a.w + rng.gen_range(-4.0..4.0)).max(2.0),
                    (a.h + rng.gen_range(-4.0..4.0)).max(2.0),
                    Angle::new(a.theta.radians() + rng.gen_range(-0.6..0.6)),
                    0,
                )
            };
            (rotated_iou(&a, &b) - mc_iou(&a, &b, samples, &mut rng)).abs()
        })
        .reduce(|| 0.0, f64::max);

    // Co-centered unit squares rotated a quarter turn: the octagon overlap,
    // area 2(sqrt(2)-1), against union 2 - 2(sqrt(2)-1).
    let sq = OrientedBox::new(Point2::new(0.0, 0.0), 1.0, 1.0, Angle::new(0.0), 0);
    let sq45 = OrientedBox::new(
        Point2::new(0.0, 0.0),
        1.0,
        1.0,
        Angle::new(std::f64::consts::FRAC_PI_4),
        0,
    );
    let inter = 2.0 * (2.0_f64.sqrt() - 1.0);
    let derived = inter / (2.0 - inter);
    let analytic45 = rotated_iou(&sq, &sq45);
    let err45 = (analytic45 - derived).abs();

    accept(
        "rotated IoU vs Monte-Carlo",
        worst <= 3e-3 && err45 <= 3e-3,
        format!(
            "pairs={pairs}, samples={samples}, worst |analytic-MC|={worst:.2e}, 45-degree case err={err45:.2e}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. Deformable convolution: dense equivalence, gradients, bitwise pair.
// ---------------------------------------------------------------------------

/// Naive dense convolution oracle (stride 1, same padding, zero border).
fn dense_conv_oracle(input: &FeatureMap, kernel: &Kernel) -> FeatureMap {
    let (h, w) = (input.height, input.width);
    let mut out = FeatureMap::zeros(kernel.c_out, h, w);
    let (rky, rkx) = ((kernel.kh / 2) as i64, (kernel.kw / 2) as i64);
    for o in 0..kernel.c_out {
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut acc = kernel.bias[o];
                for c in 0..kernel.c_in {
                    for ky in 0..kernel.kh as i64 {
                        for kx in 0..kernel.kw as i64 {
                            let (sy, sx) = (y + ky - rky, x + kx - rkx);
                            if sy < 0 || sy >= h as i64 || sx < 0 || sx >= w as i64 {
                                continue;
                            }
                            let v = input.get(c, sy as usize, sx as usize);
                            acc += v * kernel.w(o, c, ky as usize, kx as usize);
                        }
                    }
                }
                out.set(o, y as usize, x as usize, acc);
            }
        }
    }
    out
}

fn random_feature(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> FeatureMap {
    let data = (0..c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FeatureMap::from_vec(c, h, w, data).unwrap()
}

fn random_kernel(rng: &mut ChaCha8Rng, c_out: usize, c_in: usize, k: usize) -> Kernel {
    let mut kernel = Kernel::new(c_out, c_in, k, k).unwrap();
    kernel.weights = (0..kernel.weights.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    kernel.bias = (0..c_out).map(|_| rng.gen_range(-0.5..0.5)).collect();
    kernel
}

/// Offsets whose fractional part stays in [0.1, 0.9], keeping finite
/// differences away from the bilinear kinks at integer coordinates.
fn random_offsets(rng: &mut ChaCha8Rng, taps: usize, h: usize, w: usize) -> OffsetField {
    let data = (0..2 * taps * h * w)
        .map(|_| {
            let base = rng.gen_range(-2.0_f64..2.0).floor();
            base + 0.1 + 0.8 * rng.gen::<f64>()
        })
        .collect();
    OffsetField::from_vec(taps, h, w, data).unwrap()
}

fn weighted_sum(input: &FeatureMap, kernel: &Kernel, offsets: &OffsetField, up: &FeatureMap) -> f64 {
    let out = deform_conv(input, kernel, offsets).unwrap();
    out.data.iter().zip(&up.data).map(|(o, u)| o * u).sum()
}

#[test]
fn c4_deformable_convolution_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);

    // (a) Zero offsets reduce to dense convolution.
    let mut dense_err = 0.0_f64;
    for _ in 0..5 {
        let input = random_feature(&mut rng, 2, 5, 5);
        let kernel = random_kernel(&mut rng, 2, 2, 3);
        let offsets = OffsetField::zeros(9, 5, 5);
        let got = deform_conv(&input, &kernel, &offsets).unwrap();
        let want = dense_conv_oracle(&input, &kernel);
        for (a, b) in got.data.iter().zip(&want.data) {
            dense_err = dense_err.max((a - b).abs());
        }
    }

    // (b) Analytic gradients vs central finite differences, h = 1e-3,
    // on 50 random 2-channel 5x5 instances; every parameter checked.
    let h = 1e-3;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1.0);
    let mut worst_rel = 0.0_f64;
    for _ in 0..50 {
        let input = random_feature(&mut rng, 2, 5, 5);
        let kernel = random_kernel(&mut rng, 2, 2, 3);
        let offsets = random_offsets(&mut rng, 9, 5, 5);
        let up = random_feature(&mut rng, 2, 5, 5);
        let grads = deform_conv_grad(&input, &kernel, &offsets, &up).unwrap();

        for i in 0..input.data.len() {
            let mut plus = input.clone();
            plus.data[i] += h;
            let mut minus = input.clone();
            minus.data[i] -= h;
            let fd = (weighted_sum(&plus, &kernel, &offsets, &up)
                - weighted_sum(&minus, &kernel, &offsets, &up))
                / (2.0 * h);
            worst_rel = worst_rel.max(rel(grads.input.data[i], fd));
        }
        for i in 0..kernel.weights.len() {
            let mut plus = kernel.clone();
            plus.weights[i] += h;
            let mut minus = kernel.clone();
            minus.weights[i] -= h;
            let fd = (weighted_sum(&input, &plus, &offsets, &up)
                - weighted_sum(&input, &minus, &offsets, &up))
                / (2.0 * h);
            worst_rel = worst_rel.max(rel(grads.weights[i], fd));
        }
        for i in 0..kernel.bias.len() {
            let mut plus = kernel.clone();
            plus.bias[i] += h;
            let mut minus = kernel.clone();
            minus.bias[i] -= h;
            let fd = (weighted_sum(&input, &plus, &offsets, &up)
                - weighted_sum(&input, &minus, &offsets, &up))
                / (2.0 * h);
            worst_rel = worst_rel.max(rel(grads.bias[i], fd));
        }
        for i in 0..offsets.data.len() {
            let mut plus = offsets.clone();
            plus.data[i] += h;
            let mut minus = offsets.clone();
            minus.data[i] -= h;
            let fd = (weighted_sum(&input, &kernel, &plus, &up)
                - weighted_sum(&input, &kernel, &minus, &up))
                / (2.0 * h);
            worst_rel = worst_rel.max(rel(grads.offsets.data[i], fd));
        }
    }

    // (c) Branch b of the symmetric pair is bitwise identical to an
    // explicit invocation at doubled offsets.
    let input = random_feature(&mut rng, 2, 5, 5);
    let ka = random_kernel(&mut rng, 2, 2, 3);
    let kb = random_kernel(&mut rng, 2, 2, 3);
    let offsets = random_offsets(&mut rng, 9, 5, 5);
    let (_, out_b) = symmetric_pair_forward(&input, &ka, &kb, &offsets).unwrap();
    let doubled =
        OffsetField::from_vec(9, 5, 5, offsets.data.iter().map(|v| 2.0 * v).collect()).unwrap();
    let explicit = deform_conv(&input, &kb, &doubled).unwrap();
    let bitwise = out_b.data.len() == explicit.data.len()
        && out_b
            .data
            .iter()
            .zip(&explicit.data)
            .all(|(a, b)| a.to_bits() == b.to_bits());

    accept(
        "deformable convolution correctness",
        dense_err <= 1e-6 && worst_rel <= 1e-3 && bitwise,
        format!(
            "zero-offset vs dense max err={dense_err:.2e}, worst FD rel err={worst_rel:.2e}, branch-b bitwise={bitwise}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. Crowded harbor matching with a brute-force assignment oracle.
// ---------------------------------------------------------------------------

fn key(p: Point2) -> (u64, u64) {
    (p.x.to_bits(), p.y.to_bits())
}

/// Independent re-derivation of the grouping contract: shift midpoints by
/// their label signs, assign to the strictly nearest surviving center when
/// within its radius, keep the best candidate per (center, label) by score
/// then distance then input order.
fn brute_force_groups(
    centers: &[CenterDet],
    mids: &[MidpointDet],
    thresh: f64,
) -> Vec<(usize, [Option<usize>; 4])> {
    let kept: Vec<usize> =
        (0..centers.len()).filter(|&i| centers[i].score >= thresh).collect();
    let mut chosen: Vec<[Option<(usize, f64, f64)>; 4]> = vec![[None; 4]; centers.len()];
    for (mi, m) in mids.iter().enumerate() {
        if m.score < thresh {
            continue;
        }
        let (sx, sy) = match m.label {
            MidLabel::Left => (1.0, 1.0),
            MidLabel::Top => (-1.0, 1.0),
            MidLabel::Right => (-1.0, -1.0),
            MidLabel::Bottom => (1.0, -1.0),
        };
        let shifted =
            Point2::new(m.pos.x + sx * m.shift.dx, m.pos.y + sy * m.shift.dy);
        let mut best: Option<(usize, f64)> = None;
        for &ci in &kept {
            if centers[ci].class_id != m.class_id {
                continue;
            }
            let d = shifted.dist(centers[ci].pos);
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((ci, d));
            }
        }
        let Some((ci, d)) = best else { continue };
        if d > centers[ci].radius {
            continue;
        }
        let li = m.label.index();
        let replace = match chosen[ci][li] {
            None => true,
            Some((_, s, bd)) => m.score > s || (m.score == s && d < bd),
        };
        if replace {
            chosen[ci][li] = Some((mi, m.score, d));
        }
    }
    kept.into_iter()
        .map(|ci| (ci, chosen[ci].map(|slot| slot.map(|(mi, _, _)| mi))))
        .filter(|(_, slots)| slots.iter().all(Option::is_some))
        .collect()
}

#[test]
fn c5_crowded_harbor_matching() {
    let scenes = 100;
    let ships = 50;
    let spec = SceneSpec {
        images: scenes,
        objects: ships,
        classes: 1,
        layout: Layout::HarborRows { gap: 5.0, per_row: 10 },
        length_range: [60.0, 60.0],
        breadth_range: [20.0, 20.0],
        seed: 0xC5,
        ..SceneSpec::default()
    };
    let generated = generate(&spec).unwrap();

    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut total_gt = 0usize;
    let mut cross_matches = 0usize;
    let mut oracle_mismatches = 0usize;
    for scene in &generated {
        let (centers, mids) = scene.keypoints.to_dets().unwrap();
        // Provenance: every keypoint position maps back to its source box.
        let center_src: std::collections::HashMap<(u64, u64), usize> = scene
            .keypoints
            .centers
            .iter()
            .map(|c| (key(Point2::new(c.x, c.y)), c.source.unwrap()))
            .collect();
        let mid_src: std::collections::HashMap<(u64, u64), usize> = scene
            .keypoints
            .midpoints
            .iter()
            .map(|m| (key(Point2::new(m.x, m.y)), m.source.unwrap()))
            .collect();

        let groups = group(&centers, &mids, 0.1, 0.1);
        for g in &groups {
            let cs = center_src[&key(g.center.pos)];
            for m in &g.chosen {
                if mid_src[&key(m.pos)] != cs {
                    cross_matches += 1;
                }
            }
        }

        // Brute-force oracle agreement (same chosen midpoints per center).
        let oracle = brute_force_groups(&centers, &mids, 0.1);
        if oracle.len() != groups.len() {
            oracle_mismatches += 1;
        } else {
            for ((ci, slots), g) in oracle.iter().zip(&groups) {
                let same_center = key(centers[*ci].pos) == key(g.center.pos);
                let same_mids = slots.iter().zip(&g.chosen).all(|(slot, chosen)| {
                    slot.map(|mi| key(mids[mi].pos)) == Some(key(chosen.pos))
                });
                if !same_center || !same_mids {
                    oracle_mismatches += 1;
                }
            }
        }

        // Precision/recall at IoU 0.75.
        let (dets, _) = decode(&centers, &mids, 0.1, 0.1);
        let gts: Vec<OrientedBox> =
            scene.annotation.objects.iter().map(|o| o.to_box()).collect();
        total_gt += gts.len();
        let mut matched = vec![false; gts.len()];
        for det in &dets {
            let best = gts
                .iter()
                .enumerate()
                .filter(|(gi, _)| !matched[*gi])
                .map(|(gi, gt)| (gi, rotated_iou(&det.bbox, gt)))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((gi, iou)) if iou >= 0.75 => {
                    matched[gi] = true;
                    tp += 1;
                }
                _ => fp += 1,
            }
        }
    }
    let precision = tp as f64 / (tp + fp).max(1) as f64;
    let recall = tp as f64 / total_gt.max(1) as f64;
    accept(
        "crowded harbor matching",
        precision == 1.0 && recall == 1.0 && cross_matches == 0 && oracle_mismatches == 0,
        format!(
            "scenes={scenes}, ships={ships}, precision={precision}, recall={recall}, cross-matches={cross_matches}, oracle mismatches={oracle_mismatches}"
        ),
    );
}

// ---------------------------------------------------------------------------
// 6. Mean IoU degrades monotonically with jitter; full decoder beats the
//    plain line-intersection builder on noisy scenes.
// ---------------------------------------------------------------------------

/// Mean best-IoU over ground truth (misses count as zero) for both
/// decoders on one scene's keypoints.
fn scene_mean_ious(scene: &midbox::synth::Scene) -> (f64, f64, usize) {
    let (centers, mids) = scene.keypoints.to_dets().unwrap();
    let (full_dets, _) = decode(&centers, &mids, 0.1, 0.1);
    let simple_dets: Vec<Detection> = group(&centers, &mids, 0.1, 0.1)
        .iter()
        .filter_map(|g| {
            let pts = [g.chosen[0].pos, g.chosen[1].pos, g.chosen[2].pos, g.chosen[3].pos];
            let bbox = build_box_simple(&pts, g.center.class_id).ok()?;
            Some(Detection { bbox, score: g.center.score })
        })
        .collect();
    let gts: Vec<OrientedBox> = scene.annotation.objects.iter().map(|o| o.to_box()).collect();
    let best = |dets: &[Detection]| -> f64 {
        gts.iter()
            .map(|gt| {
                dets.iter()
                    .filter(|d| d.bbox.class_id == gt.class_id)
                    .map(|d| rotated_iou(&d.bbox, gt))
                    .fold(0.0, f64::max)
            })
            .sum()
    };
    (best(&full_dets), best(&simple_dets), gts.len())
}

#[test]
fn c6_noise_monotonicity_and_decoder_ordering() {
    let sigmas = [0.0, 1.0, 2.0, 4.0];
    let mut full_means = Vec::new();
    let mut simple_means = Vec::new();
    for &sigma in &sigmas {
        let spec = SceneSpec {
            images: 100,
            objects: 12,
            classes: 1,
            layout: Layout::HarborRows { gap: 8.0, per_row: 4 },
            length_range: [70.0, 110.0],
            breadth_range: [24.0, 40.0],
            noise: NoiseSpec { jitter_sigma: sigma, ..NoiseSpec::default() },
            seed: 0xC6,
            ..SceneSpec::default()
        };
        let scenes = generate(&spec).unwrap();
        let (full_sum, simple_sum, count) = scenes
            .par_iter()
            .map(scene_mean_ious)
            .reduce(|| (0.0, 0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
        full_means.push(full_sum / count as f64);
        simple_means.push(simple_sum / count as f64);
    }
    let monotone = full_means.windows(2).all(|w| w[1] <= w[0]);
    let full_wins = sigmas
        .iter()
        .zip(full_means.iter().zip(&simple_means))
        .filter(|(s, _)| **s > 0.0)
        .all(|(_, (f, s))| f >= s);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    accept(
        "noise monotonicity and decoder ordering",
        monotone && full_wins,
        format!(
            "sigma={sigmas:?}, full decoder mean IoU=[{}], simple builder=[{}]",
            fmt(&full_means),
            fmt(&simple_means)
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Loss blend arithmetic.
// ---------------------------------------------------------------------------

#[test]
fn c7_loss_arithmetic() {
    let parts = LossParts { midpoint_heat: 1.0, center_heat: 1.0, shift: 1.0, radius: 1.0 };
    let total = total_loss(&parts, &LossWeights::default()).unwrap();
    accept(
        "loss arithmetic",
        total == 2.75,
        format!("total_loss(1,1,1,1) = {total} with alpha=0.5, beta=0.25"),
    );
}

// ---------------------------------------------------------------------------
// 8. Metric correctness: hand-derived AP and perfect-detection mAP.
// ---------------------------------------------------------------------------

#[test]
fn c8_metric_correctness() {
    // [TP, FP, TP] over 2 ground truths: recall levels 0..0.5 see precision
    // 1, levels 0.6..1.0 see 2/3, so AP = (6 + 5 * 2/3) / 11 = 28/33.
    let ap = ap_voc07(&[true, false, true], 2).unwrap();
    let ap_err = (ap - 28.0 / 33.0).abs();

    // Perfect detections on a synthetic multi-class scene.
    let spec = SceneSpec { images: 5, objects: 10, classes: 3, seed: 0xC8, ..SceneSpec::default() };
    let scenes = generate(&spec).unwrap();
    let gt: Vec<ImageRecord> = scenes.iter().map(|s| s.annotation.clone()).collect();
    let det: Vec<ImageRecord> = gt
        .iter()
        .map(|r| {
            let mut d = r.clone();
            for o in &mut d.objects {
                o.score = Some(1.0);
            }
            d
        })
        .collect();
    let report = evaluate_records(&gt, &det, 0.5).unwrap();

    accept(
        "metric correctness",
        ap_err <= 1e-9 && report.map == 1.0,
        format!("crafted AP err={ap_err:.1e} (28/33), perfect-detection mAP={}", report.map),
    );
}

// ---------------------------------------------------------------------------
// 9. Format round-trips and the CLI loop.
// ---------------------------------------------------------------------------

#[test]
fn c9_format_and_cli_roundtrips() {
    use midbox::io::mtf::{read_mtf_from, write_mtf_to};
    use midbox::io::records::{read_jsonl, write_jsonl};
    use std::process::Command;

    // MTF: value-exact read-back, byte-identical rewrite.
    let spec = SceneSpec { images: 1, objects: 6, classes: 2, seed: 0xC9, ..SceneSpec::default() };
    let scene = &generate(&spec).unwrap()[0];
    let boxes: Vec<OrientedBox> = scene.annotation.objects.iter().map(|o| o.to_box()).collect();
    let (targets, _) = midbox_core::heatmap::encode_targets(&boxes, (768, 768), 4, 2).unwrap();
    let (tensor, names) = targets.to_stacked().unwrap();
    let mut buf = Vec::new();
    write_mtf_to(&mut buf, &tensor, &names).unwrap();
    let (back, back_names) = read_mtf_from(&mut buf.as_slice()).unwrap();
    let mtf_values_ok = back.data().iter().zip(tensor.data()).all(|(a, b)| a.to_bits() == b.to_bits())
        && back_names == names;
    let mut buf2 = Vec::new();
    write_mtf_to(&mut buf2, &back, &back_names).unwrap();
    let mtf_bytes_ok = buf == buf2;

    // JSONL: byte-identical rewrite through parse.
    let dir = tempfile::tempdir().unwrap();
    let gt_path = dir.path().join("gt.jsonl");
    write_jsonl(&gt_path, &[scene.annotation.clone()]).unwrap();
    let bytes1 = std::fs::read(&gt_path).unwrap();
    let parsed: Vec<ImageRecord> = read_jsonl(&gt_path).unwrap();
    write_jsonl(&gt_path, &parsed).unwrap();
    let jsonl_bytes_ok = bytes1 == std::fs::read(&gt_path).unwrap();

    // CLI loop on noiseless data: synth -> encode -> decode -> eval = mAP 1.
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_midbox"))
            .args(args)
            .current_dir(dir.path())
            .output()
            .expect("spawn midbox");
        assert!(
            out.status.success(),
            "midbox {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out.stdout
    };
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"width": 768, "height": 768, "images": 4, "objects": 8,
            "layout": {"kind": "harbor_rows", "gap": 12.0, "per_row": 4},
            "length_range": [70.0, 110.0], "breadth_range": [24.0, 40.0],
            "seed": 201}"#,
    )
    .unwrap();
    run(&["synth", "--spec", "spec.json", "--out-dir", "synth"]);
    run(&["encode", "--ann", "synth/gt.jsonl", "--out-dir", "maps"]);
    run(&["decode", "--input", "maps/manifest.json", "--out", "det.jsonl"]);
    let stdout = run(&["eval", "--gt", "synth/gt.jsonl", "--det", "det.jsonl"]);
    let report: serde_json::Value = serde_json::from_slice(&stdout).unwrap();
    let cli_map = report["map"].as_f64().unwrap_or(0.0);

    accept(
        "format and CLI round-trips",
        mtf_values_ok && mtf_bytes_ok && jsonl_bytes_ok && cli_map == 1.0,
        format!(
            "MTF values exact={mtf_values_ok}, MTF bytes stable={mtf_bytes_ok}, JSONL bytes stable={jsonl_bytes_ok}, CLI noiseless mAP={cli_map}"
        ),
    );
}
