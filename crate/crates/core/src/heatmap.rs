//! Dense target codec: boxes to keypoint heatmaps and back, plus the
//! training losses.
//!
//! For `K` classes on an `H x W` grid (image pixels divided by `stride`,
//! rounded up) a [`TargetSet`] holds:
//!
//! * `center_heat`  `[K, H, W]`   one Gaussian peak per box center,
//! * `mid_heat`     `[4K, H, W]`  midpoint peaks, channels l,t,r,b per class,
//! * `shift_map`    `[8, H, W]`   centripetal shift (dx, dy) per label,
//!   class-agnostic, in stride units,
//! * `radius_map`   `[1, H, W]`   matching radius in stride units,
//! * `pos_mask`     `[5, H, W]`   1.0 at keypoint pixels (l, t, r, b, center).
//!
//! Heatmaps compose by per-pixel maximum, never by sum, so overlapping
//! Gaussians keep their peaks at exactly 1.0.

use crate::error::{Error, Result};
use crate::geom::{box_to_keypoints, MidLabel, OrientedBox, Point2, Shift};
use crate::matcher::{CenterDet, MidpointDet};
use crate::tensor::Tensor;

/// Channels appended to the per-class heatmaps in a stacked tensor:
/// 8 shift + 1 radius + 5 mask.
const EXTRA_CHANNELS: usize = 14;

/// The full set of dense targets (or predictions) for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub center_heat: Tensor,
    pub mid_heat: Tensor,
    pub shift_map: Tensor,
    pub radius_map: Tensor,
    pub pos_mask: Tensor,
}

impl TargetSet {
    pub fn zeros(num_classes: usize, height: usize, width: usize) -> Self {
        Self {
            center_heat: Tensor::zeros([num_classes, height, width]),
            mid_heat: Tensor::zeros([4 * num_classes, height, width]),
            shift_map: Tensor::zeros([8, height, width]),
            radius_map: Tensor::zeros([1, height, width]),
            pos_mask: Tensor::zeros([5, height, width]),
        }
    }

    /// Checks the cross-tensor shape contract and returns `(K, H, W)`.
    pub fn validate(&self) -> Result<(usize, usize, usize)> {
        let [k, h, w] = self.center_heat.shape();
        if k == 0 {
            return Err(Error::ShapeMismatch("center heatmap has zero channels".into()));
        }
        let want = [
            (self.mid_heat.shape(), [4 * k, h, w], "midpoint heatmap"),
            (self.shift_map.shape(), [8, h, w], "shift map"),
            (self.radius_map.shape(), [1, h, w], "radius map"),
            (self.pos_mask.shape(), [5, h, w], "position mask"),
        ];
        for (got, expect, name) in want {
            if got != expect {
                return Err(Error::ShapeMismatch(format!(
                    "{name} is {got:?}, expected {expect:?}"
                )));
            }
        }
        Ok((k, h, w))
    }

    /// Channel names for the stacked single-tensor layout.
    pub fn channel_names(num_classes: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(5 * num_classes + EXTRA_CHANNELS);
        for k in 0..num_classes {
            names.push(format!("center_heat/{k}"));
        }
        for k in 0..num_classes {
            for label in MidLabel::ALL {
                names.push(format!("mid_heat/{k}/{}", label.short_name()));
            }
        }
        for label in MidLabel::ALL {
            names.push(format!("shift/{}/dx", label.short_name()));
            names.push(format!("shift/{}/dy", label.short_name()));
        }
        names.push("radius".to_string());
        for role in ["l", "t", "r", "b", "c"] {
            names.push(format!("mask/{role}"));
        }
        names
    }

    /// Concatenates all tensors into one `[5K + 14, H, W]` tensor with the
    /// channel order of [`TargetSet::channel_names`].
    pub fn to_stacked(&self) -> Result<(Tensor, Vec<String>)> {
        let (k, h, w) = self.validate()?;
        let mut data =
            Vec::with_capacity((5 * k + EXTRA_CHANNELS) * h * w);
        for t in [
            &self.center_heat,
            &self.mid_heat,
            &self.shift_map,
            &self.radius_map,
            &self.pos_mask,
        ] {
            data.extend_from_slice(t.data());
        }
        let stacked = Tensor::from_vec([5 * k + EXTRA_CHANNELS, h, w], data)?;
        Ok((stacked, Self::channel_names(k)))
    }

    /// Inverse of [`TargetSet::to_stacked`]. When `names` are given they are
    /// checked against the canonical layout.
    pub fn from_stacked(stacked: &Tensor, names: Option<&[String]>) -> Result<Self> {
        let [c, h, w] = stacked.shape();
        if c < EXTRA_CHANNELS + 5 || (c - EXTRA_CHANNELS) % 5 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "stacked tensor has {c} channels; expected 5*K + {EXTRA_CHANNELS}"
            )));
        }
        let k = (c - EXTRA_CHANNELS) / 5;
        if let Some(names) = names {
            let expected = Self::channel_names(k);
            if names != expected.as_slice() {
                return Err(Error::ShapeMismatch(
                    "stacked channel names do not match the canonical layout".into(),
                ));
            }
        }
        let plane = h * w;
        let mut take = {
            let mut offset = 0;
            move |channels: usize, data: &[f32]| {
                let slice = data[offset * plane..(offset + channels) * plane].to_vec();
                offset += channels;
                Tensor::from_vec([channels, h, w], slice)
            }
        };
        Ok(Self {
            center_heat: take(k, stacked.data())?,
            mid_heat: take(4 * k, stacked.data())?,
            shift_map: take(8, stacked.data())?,
            radius_map: take(1, stacked.data())?,
            pos_mask: take(5, stacked.data())?,
        })
    }

    /// Expands the four midpoint mask channels to gate the 8 shift channels.
    pub fn shift_mask(&self) -> Tensor {
        let [_, h, w] = self.pos_mask.shape();
        let mut out = Tensor::zeros([8, h, w]);
        for label in MidLabel::ALL {
            let src = self.pos_mask.channel(label.index()).to_vec();
            out.channel_mut(2 * label.index()).copy_from_slice(&src);
            out.channel_mut(2 * label.index() + 1).copy_from_slice(&src);
        }
        out
    }

    /// The center channel of the mask, gating the radius map.
    pub fn radius_mask(&self) -> Tensor {
        let [_, h, w] = self.pos_mask.shape();
        let mut out = Tensor::zeros([1, h, w]);
        out.channel_mut(0).copy_from_slice(self.pos_mask.channel(4));
        out
    }
}

/// Diagnostics from [`encode_targets`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EncodeStats {
    /// Boxes dropped because they failed validation.
    pub skipped_boxes: usize,
    /// Keypoints whose pixel fell outside the grid and was clamped.
    pub clamped_keypoints: usize,
}

/// Renders an unnormalized Gaussian bump with peak value `peak` centered at
/// grid pixel `(cx, cy)`, composing with the existing channel content by
/// per-pixel maximum. Pixels farther than `3 * sigma` are untouched. An
/// out-of-grid center is clamped onto the grid; the return value reports
/// whether clamping happened.
pub fn render_gaussian_peak(
    heat: &mut Tensor,
    channel: usize,
    cx: i64,
    cy: i64,
    sigma: f64,
    peak: f64,
) -> bool {
    let (h, w) = (heat.height() as i64, heat.width() as i64);
    let clamped_x = cx.clamp(0, w - 1);
    let clamped_y = cy.clamp(0, h - 1);
    let clamped = clamped_x != cx || clamped_y != cy;

    let reach = (3.0 * sigma).floor() as i64;
    let reach_sq = (3.0 * sigma) * (3.0 * sigma);
    let inv = 1.0 / (2.0 * sigma * sigma);
    for y in (clamped_y - reach).max(0)..=(clamped_y + reach).min(h - 1) {
        for x in (clamped_x - reach).max(0)..=(clamped_x + reach).min(w - 1) {
            let dx = (x - clamped_x) as f64;
            let dy = (y - clamped_y) as f64;
            let d_sq = dx * dx + dy * dy;
            if d_sq > reach_sq {
                continue;
            }
            let v = (peak * (-d_sq * inv).exp()) as f32;
            let cur = heat.get(channel, y as usize, x as usize);
            if v > cur {
                heat.set(channel, y as usize, x as usize, v);
            }
        }
    }
    clamped
}

/// [`render_gaussian_peak`] with the standard unit peak.
pub fn render_gaussian(heat: &mut Tensor, channel: usize, cx: i64, cy: i64, sigma: f64) -> bool {
    render_gaussian_peak(heat, channel, cx, cy, sigma, 1.0)
}

fn grid_pixel(p: Point2, stride: usize, width: usize, height: usize) -> (i64, i64, bool) {
    let px = (p.x / stride as f64).floor() as i64;
    let py = (p.y / stride as f64).floor() as i64;
    let cx = px.clamp(0, width as i64 - 1);
    let cy = py.clamp(0, height as i64 - 1);
    (cx, cy, cx != px || cy != py)
}

/// Renders dense targets for one image.
///
/// The grid is `ceil(image / stride)` per side. Every box contributes five
/// Gaussians with `sigma = max(1, r / (3 * stride))`; shift and radius
/// values are written in stride units at the corresponding keypoint pixels.
/// Degenerate boxes are skipped (counted in the stats); a class id at or
/// above `num_classes` is an error.
pub fn encode_targets(
    boxes: &[OrientedBox],
    image_size: (usize, usize),
    stride: usize,
    num_classes: usize,
) -> Result<(TargetSet, EncodeStats)> {
    if stride == 0 || num_classes == 0 {
        return Err(Error::InvalidArgument(
            "stride and num_classes must be positive".into(),
        ));
    }
    let (img_w, img_h) = image_size;
    if img_w == 0 || img_h == 0 {
        return Err(Error::InvalidArgument("image size must be positive".into()));
    }
    let w = img_w.div_ceil(stride);
    let h = img_h.div_ceil(stride);
    let mut ts = TargetSet::zeros(num_classes, h, w);
    let mut stats = EncodeStats::default();

    for b in boxes {
        if b.class_id as usize >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "class id {} out of range for {} classes",
                b.class_id, num_classes
            )));
        }
        let kp = match box_to_keypoints(b) {
            Ok(kp) => kp,
            Err(_) => {
                stats.skipped_boxes += 1;
                continue;
            }
        };
        let class = b.class_id as usize;
        let sigma = (kp.radius / (3.0 * stride as f64)).max(1.0);
        let s = stride as f64;

        let (ccx, ccy, c_clamped) = grid_pixel(kp.center, stride, w, h);
        if c_clamped {
            stats.clamped_keypoints += 1;
        }
        render_gaussian(&mut ts.center_heat, class, ccx, ccy, sigma);
        ts.radius_map.set(0, ccy as usize, ccx as usize, (kp.radius / s) as f32);
        ts.pos_mask.set(4, ccy as usize, ccx as usize, 1.0);

        for label in MidLabel::ALL {
            let (mx, my, m_clamped) = grid_pixel(kp.midpoint(label), stride, w, h);
            if m_clamped {
                stats.clamped_keypoints += 1;
            }
            let li = label.index();
            render_gaussian(&mut ts.mid_heat, class * 4 + li, mx, my, sigma);
            let shift = kp.shift(label);
            ts.shift_map.set(2 * li, my as usize, mx as usize, (shift.dx / s) as f32);
            ts.shift_map.set(2 * li + 1, my as usize, mx as usize, (shift.dy / s) as f32);
            ts.pos_mask.set(li, my as usize, mx as usize, 1.0);
        }
    }
    Ok((ts, stats))
}

/// One local maximum of a heatmap channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub channel: usize,
    pub x: usize,
    pub y: usize,
    pub score: f32,
}

/// Finds per-channel local maxima.
///
/// A pixel is a peak when it is `>=` all of its 3x3 neighbours (ties kept),
/// its score is `>= thresh`, and its score is positive — flat zero regions
/// never produce peaks. Each channel keeps its best `topk` peaks, ordered by
/// score descending, then row-major position.
pub fn extract_peaks(heat: &Tensor, topk: usize, thresh: f64) -> Vec<Peak> {
    let [c, h, w] = heat.shape();
    let mut out = Vec::new();
    for ch in 0..c {
        let plane = heat.channel(ch);
        let mut peaks: Vec<Peak> = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let v = plane[y * w + x];
                if v <= 0.0 || (v as f64) < thresh {
                    continue;
                }
                let mut is_peak = true;
                'scan: for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        if plane[ny * w + nx] > v {
                            is_peak = false;
                            break 'scan;
                        }
                    }
                }
                if is_peak {
                    peaks.push(Peak { channel: ch, x, y, score: v });
                }
            }
        }
        peaks.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.y.cmp(&b.y))
                .then(a.x.cmp(&b.x))
        });
        peaks.truncate(topk);
        out.extend(peaks);
    }
    out
}

/// Reads keypoint candidates out of prediction maps.
///
/// Peak pixels become sub-pixel positions at the pixel center,
/// `(px + 0.5) * stride`; shifts and radii are read at the peak pixel and
/// scaled back to image pixels. Radii are clamped to at least one pixel and
/// negative shift components to zero.
pub fn decode_maps(
    maps: &TargetSet,
    stride: usize,
    topk: usize,
    center_thresh: f64,
    midpoint_thresh: f64,
) -> Result<(Vec<CenterDet>, Vec<MidpointDet>)> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    maps.validate()?;
    let s = stride as f64;
    let pos = |x: usize, y: usize| Point2::new((x as f64 + 0.5) * s, (y as f64 + 0.5) * s);

    let centers = extract_peaks(&maps.center_heat, topk, center_thresh)
        .into_iter()
        .map(|p| CenterDet {
            pos: pos(p.x, p.y),
            score: p.score as f64,
            radius: (maps.radius_map.get(0, p.y, p.x) as f64 * s).max(1.0),
            class_id: p.channel as u32,
        })
        .collect();

    let midpoints = extract_peaks(&maps.mid_heat, topk, midpoint_thresh)
        .into_iter()
        .map(|p| {
            let label = MidLabel::from_index(p.channel % 4).expect("index < 4");
            let li = label.index();
            let dx = (maps.shift_map.get(2 * li, p.y, p.x) as f64 * s).max(0.0);
            let dy = (maps.shift_map.get(2 * li + 1, p.y, p.x) as f64 * s).max(0.0);
            MidpointDet {
                label,
                pos: pos(p.x, p.y),
                score: p.score as f64,
                shift: Shift::new(dx, dy),
                class_id: (p.channel / 4) as u32,
            }
        })
        .collect();

    Ok((centers, midpoints))
}

/// Loss hyper-parameters: heatmap focal exponents and the Eq-style blend
/// weights for the total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Weight of the center heatmap term.
    pub alpha: f64,
    /// Weight of the radius term.
    pub beta: f64,
    /// Focal exponent on the prediction.
    pub focal_a: f64,
    /// Focal exponent on the soft target penalty.
    pub focal_b: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 0.25, focal_a: 2.0, focal_b: 4.0 }
    }
}

impl LossWeights {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("focal_a", self.focal_a),
            ("focal_b", self.focal_b),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "loss weight {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

const PRED_CLAMP: f64 = 1e-6;

/// Penalty-reduced focal loss over a heatmap pair.
///
/// Pixels where the target is exactly 1 contribute
/// `(1 - p)^focal_a * ln(p)`; all other pixels contribute
/// `(1 - t)^focal_b * p^focal_a * ln(1 - p)`. The sum is negated and divided
/// by the number of target-1 pixels (at least 1). Predictions are clamped to
/// `[1e-6, 1 - 1e-6]` before the logs.
pub fn focal_loss(pred: &Tensor, target: &Tensor, weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let mut n_pos = 0usize;
    let mut sum = 0.0f64;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let p = (p as f64).clamp(PRED_CLAMP, 1.0 - PRED_CLAMP);
        let t = t as f64;
        if t == 1.0 {
            n_pos += 1;
            sum += (1.0 - p).powf(weights.focal_a) * p.ln();
        } else {
            sum += (1.0 - t).powf(weights.focal_b) * p.powf(weights.focal_a) * (1.0 - p).ln();
        }
    }
    Ok(-sum / n_pos.max(1) as f64)
}

/// Mean absolute error over masked pixels: `sum(mask * |pred - target|) /
/// max(1, sum(mask))`. The mask must be binary.
pub fn l1_masked(pred: &Tensor, target: &Tensor, mask: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() || pred.shape() != mask.shape() {
        return Err(Error::ShapeMismatch(format!(
            "pred {:?}, target {:?}, mask {:?} must match",
            pred.shape(),
            target.shape(),
            mask.shape()
        )));
    }
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for ((&p, &t), &m) in pred.data().iter().zip(target.data()).zip(mask.data()) {
        if m != 0.0 && m != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "mask values must be 0 or 1, got {m}"
            )));
        }
        if m == 1.0 {
            num += (p as f64 - t as f64).abs();
            den += 1.0;
        }
    }
    Ok(num / den.max(1.0))
}

/// The four scalar loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub midpoint_heat: f64,
    pub center_heat: f64,
    pub shift: f64,
    pub radius: f64,
}

/// Blended total: `L_m + alpha * L_c + L_cs + beta * L_r`.
pub fn total_loss(parts: &LossParts, weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    for (name, v) in [
        ("midpoint_heat", parts.midpoint_heat),
        ("center_heat", parts.center_heat),
        ("shift", parts.shift),
        ("radius", parts.radius),
    ] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "loss part {name} must be finite and >= 0, got {v}"
            )));
        }
    }
    Ok(parts.midpoint_heat
        + weights.alpha * parts.center_heat
        + parts.shift
        + weights.beta * parts.radius)
}

/// All four terms plus the blended total for a prediction/target pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub parts: LossParts,
    pub total: f64,
}

/// Computes every term of the training loss between two target sets, using
/// the target's masks for the regression terms.
pub fn loss_breakdown(
    pred: &TargetSet,
    target: &TargetSet,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    let shape_p = pred.validate()?;
    let shape_t = target.validate()?;
    if shape_p != shape_t {
        return Err(Error::ShapeMismatch(format!(
            "prediction grid {shape_p:?} vs target grid {shape_t:?}"
        )));
    }
    let parts = LossParts {
        midpoint_heat: focal_loss(&pred.mid_heat, &target.mid_heat, weights)?,
        center_heat: focal_loss(&pred.center_heat, &target.center_heat, weights)?,
        shift: l1_masked(&pred.shift_map, &target.shift_map, &target.shift_mask())?,
        radius: l1_masked(&pred.radius_map, &target.radius_map, &target.radius_mask())?,
    };
    Ok(LossBreakdown { total: total_loss(&parts, weights)?, parts })
}
