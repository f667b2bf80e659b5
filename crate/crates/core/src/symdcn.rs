//! Numerical reference for the symmetric deformable convolution block.
//!
//! Two sibling deformable convolutions share one predicted offset field:
//! branch a samples at the offsets `O`, branch b at exactly `2 * O`, which
//! encodes the constraint that twice the offset from a midpoint reaches the
//! opposite midpoint. Everything here is plain `f64` CPU code with analytic
//! gradients, meant for verification at desk scale rather than training
//! throughput.
//!
//! Convolutions are stride 1 with same padding; sampling uses bilinear
//! interpolation with zero contribution from out-of-bounds corners. At
//! exactly integer sampling coordinates the interpolation weights are taken
//! from the *left* cell (fraction 1 within `[v-1, v]`), which fixes the
//! subgradient there; finite-difference checks must keep sampling points
//! at least a step away from integers.

use crate::error::{Error, Result};

/// Dense `[channels, height, width]` array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::ShapeMismatch(format!(
                "feature map [{channels}, {height}, {width}] wants {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Pixel value with zero padding outside the map.
    #[inline]
    fn pixel(&self, c: usize, y: i64, x: i64) -> f64 {
        if y < 0 || x < 0 || y >= self.height as i64 || x >= self.width as i64 {
            0.0
        } else {
            self.get(c, y as usize, x as usize)
        }
    }
}

/// Per-pixel, per-tap sampling offsets, layout `[2 * taps, H, W]` with
/// channel `2t` holding dy and `2t + 1` holding dx of tap `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetField {
    pub taps: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl OffsetField {
    pub fn zeros(taps: usize, height: usize, width: usize) -> Self {
        Self { taps, height, width, data: vec![0.0; 2 * taps * height * width] }
    }

    pub fn from_vec(taps: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 2 * taps * height * width {
            return Err(Error::ShapeMismatch(format!(
                "offset field [{} , {height}, {width}] wants {} values, got {}",
                2 * taps,
                2 * taps * height * width,
                data.len()
            )));
        }
        Ok(Self { taps, height, width, data })
    }

    #[inline]
    fn idx(&self, channel: usize, y: usize, x: usize) -> usize {
        (channel * self.height + y) * self.width + x
    }

    #[inline]
    pub fn dy(&self, tap: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(2 * tap, y, x)]
    }

    #[inline]
    pub fn dx(&self, tap: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(2 * tap + 1, y, x)]
    }

    /// Every component multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> OffsetField {
        OffsetField {
            taps: self.taps,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Convolution weights `[c_out, c_in, kh, kw]` plus per-output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub c_out: usize,
    pub c_in: usize,
    pub kh: usize,
    pub kw: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Kernel {
    pub fn new(c_out: usize, c_in: usize, kh: usize, kw: usize) -> Result<Self> {
        if kh % 2 == 0 || kw % 2 == 0 || kh == 0 || kw == 0 {
            return Err(Error::InvalidArgument(format!(
                "kernel extents must be odd and positive, got {kh}x{kw}"
            )));
        }
        Ok(Self {
            c_out,
            c_in,
            kh,
            kw,
            weights: vec![0.0; c_out * c_in * kh * kw],
            bias: vec![0.0; c_out],
        })
    }

    #[inline]
    pub fn w(&self, o: usize, c: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.c_in + c) * self.kh + ky) * self.kw + kx]
    }

    #[inline]
    pub fn set_w(&mut self, o: usize, c: usize, ky: usize, kx: usize, v: f64) {
        self.weights[((o * self.c_in + c) * self.kh + ky) * self.kw + kx] = v;
    }

    fn validate_against(&self, input: &FeatureMap, offsets: &OffsetField) -> Result<()> {
        if self.c_in != input.channels {
            return Err(Error::ShapeMismatch(format!(
                "kernel expects {} input channels, feature map has {}",
                self.c_in, input.channels
            )));
        }
        if self.weights.len() != self.c_out * self.c_in * self.kh * self.kw
            || self.bias.len() != self.c_out
        {
            return Err(Error::ShapeMismatch("kernel buffer sizes are inconsistent".into()));
        }
        if offsets.taps != self.kh * self.kw {
            return Err(Error::ShapeMismatch(format!(
                "offset field has {} taps, kernel has {}",
                offsets.taps,
                self.kh * self.kw
            )));
        }
        if offsets.height != input.height || offsets.width != input.width {
            return Err(Error::ShapeMismatch(format!(
                "offset field is {}x{}, feature map is {}x{}",
                offsets.height, offsets.width, input.height, input.width
            )));
        }
        Ok(())
    }
}

/// One axis of a bilinear cell: base index and fractional weight, using the
/// left cell at exactly integer coordinates.
#[inline]
fn cell(v: f64) -> (i64, f64) {
    let f = v.floor();
    if v == f {
        (v as i64 - 1, 1.0)
    } else {
        (f as i64, v - f)
    }
}

/// Bilinear sample of channel `c` at continuous `(x, y)`; corners outside
/// the map contribute zero.
pub fn bilinear_sample(map: &FeatureMap, c: usize, x: f64, y: f64) -> f64 {
    let (x0, wx) = cell(x);
    let (y0, wy) = cell(y);
    let v00 = map.pixel(c, y0, x0);
    let v01 = map.pixel(c, y0, x0 + 1);
    let v10 = map.pixel(c, y0 + 1, x0);
    let v11 = map.pixel(c, y0 + 1, x0 + 1);
    (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) + wy * ((1.0 - wx) * v10 + wx * v11)
}

/// Sample value plus its spatial derivatives and the four corner weights
/// (corner order 00, 01, 10, 11 with y-major naming).
struct SampleGrad {
    value: f64,
    dvdx: f64,
    dvdy: f64,
    corners: [(i64, i64, f64); 4],
}

fn bilinear_full(map: &FeatureMap, c: usize, x: f64, y: f64) -> SampleGrad {
    let (x0, wx) = cell(x);
    let (y0, wy) = cell(y);
    let v00 = map.pixel(c, y0, x0);
    let v01 = map.pixel(c, y0, x0 + 1);
    let v10 = map.pixel(c, y0 + 1, x0);
    let v11 = map.pixel(c, y0 + 1, x0 + 1);
    SampleGrad {
        value: (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) + wy * ((1.0 - wx) * v10 + wx * v11),
        dvdx: (1.0 - wy) * (v01 - v00) + wy * (v11 - v10),
        dvdy: (1.0 - wx) * (v10 - v00) + wx * (v11 - v01),
        corners: [
            (y0, x0, (1.0 - wy) * (1.0 - wx)),
            (y0, x0 + 1, (1.0 - wy) * wx),
            (y0 + 1, x0, wy * (1.0 - wx)),
            (y0 + 1, x0 + 1, wy * wx),
        ],
    }
}

/// Deformable convolution, stride 1, same padding: output pixel `(o, y, x)`
/// sums `w[o,c,t] * input[c]` sampled at the tap position displaced by the
/// per-pixel offset of tap `t`.
pub fn deform_conv(input: &FeatureMap, kernel: &Kernel, offsets: &OffsetField) -> Result<FeatureMap> {
    kernel.validate_against(input, offsets)?;
    let (h, w) = (input.height, input.width);
    let (rky, rkx) = ((kernel.kh / 2) as i64, (kernel.kw / 2) as i64);
    let mut out = FeatureMap::zeros(kernel.c_out, h, w);
    for y in 0..h {
        for x in 0..w {
            for t in 0..offsets.taps {
                let (ky, kx) = (t / kernel.kw, t % kernel.kw);
                let sy = y as f64 + ky as f64 - rky as f64 + offsets.dy(t, y, x);
                let sx = x as f64 + kx as f64 - rkx as f64 + offsets.dx(t, y, x);
                for c in 0..kernel.c_in {
                    let v = bilinear_sample(input, c, sx, sy);
                    if v == 0.0 {
                        continue;
                    }
                    for o in 0..kernel.c_out {
                        let acc = out.get(o, y, x) + kernel.w(o, c, ky, kx) * v;
                        out.set(o, y, x, acc);
                    }
                }
            }
            for o in 0..kernel.c_out {
                let acc = out.get(o, y, x) + kernel.bias[o];
                out.set(o, y, x, acc);
            }
        }
    }
    Ok(out)
}

/// The symmetric pair with an explicit branch-b offset factor.
pub fn symmetric_pair_with_factor(
    input: &FeatureMap,
    kernel_a: &Kernel,
    kernel_b: &Kernel,
    offsets: &OffsetField,
    factor: f64,
) -> Result<(FeatureMap, FeatureMap)> {
    let out_a = deform_conv(input, kernel_a, offsets)?;
    let out_b = deform_conv(input, kernel_b, &offsets.scaled(factor))?;
    Ok((out_a, out_b))
}

/// Two deformable convolutions over one shared offset field: branch a uses
/// the offsets as-is, branch b uses them doubled.
pub fn symmetric_pair_forward(
    input: &FeatureMap,
    kernel_a: &Kernel,
    kernel_b: &Kernel,
    offsets: &OffsetField,
) -> Result<(FeatureMap, FeatureMap)> {
    symmetric_pair_with_factor(input, kernel_a, kernel_b, offsets, 2.0)
}

/// Gradients of a scalar loss through [`deform_conv`], given the upstream
/// gradient with respect to the output.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformConvGrads {
    pub input: FeatureMap,
    /// Same layout as [`Kernel::weights`].
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub offsets: OffsetField,
}

/// Analytic backward pass of [`deform_conv`].
pub fn deform_conv_grad(
    input: &FeatureMap,
    kernel: &Kernel,
    offsets: &OffsetField,
    upstream: &FeatureMap,
) -> Result<DeformConvGrads> {
    kernel.validate_against(input, offsets)?;
    if upstream.channels != kernel.c_out
        || upstream.height != input.height
        || upstream.width != input.width
    {
        return Err(Error::ShapeMismatch(format!(
            "upstream [{}, {}, {}] does not match output [{}, {}, {}]",
            upstream.channels,
            upstream.height,
            upstream.width,
            kernel.c_out,
            input.height,
            input.width
        )));
    }
    let (h, w) = (input.height, input.width);
    let (rky, rkx) = ((kernel.kh / 2) as i64, (kernel.kw / 2) as i64);
    let mut grads = DeformConvGrads {
        input: FeatureMap::zeros(input.channels, h, w),
        weights: vec![0.0; kernel.weights.len()],
        bias: vec![0.0; kernel.c_out],
        offsets: OffsetField::zeros(offsets.taps, h, w),
    };

    for y in 0..h {
        for x in 0..w {
            for o in 0..kernel.c_out {
                grads.bias[o] += upstream.get(o, y, x);
            }
            for t in 0..offsets.taps {
                let (ky, kx) = (t / kernel.kw, t % kernel.kw);
                let sy = y as f64 + ky as f64 - rky as f64 + offsets.dy(t, y, x);
                let sx = x as f64 + kx as f64 - rkx as f64 + offsets.dx(t, y, x);
                let mut d_sy = 0.0;
                let mut d_sx = 0.0;
                for c in 0..kernel.c_in {
                    let s = bilinear_full(input, c, sx, sy);
                    // Upstream mass reaching this (c, t) sample.
                    let mut g_sample = 0.0;
                    for o in 0..kernel.c_out {
                        let g = upstream.get(o, y, x);
                        if g == 0.0 {
                            continue;
                        }
                        let wi = ((o * kernel.c_in + c) * kernel.kh + ky) * kernel.kw + kx;
                        grads.weights[wi] += g * s.value;
                        g_sample += g * kernel.w(o, c, ky, kx);
                    }
                    if g_sample == 0.0 {
                        continue;
                    }
                    d_sx += g_sample * s.dvdx;
                    d_sy += g_sample * s.dvdy;
                    for (cy, cx, cw) in s.corners {
                        if cy >= 0 && cx >= 0 && (cy as i64) < h as i64 && (cx as i64) < w as i64 && cw != 0.0
                        {
                            let cur = grads.input.get(c, cy as usize, cx as usize);
                            grads.input.set(c, cy as usize, cx as usize, cur + g_sample * cw);
                        }
                    }
                }
                let dyi = grads.offsets.idx(2 * t, y, x);
                grads.offsets.data[dyi] += d_sy;
                let dxi = grads.offsets.idx(2 * t + 1, y, x);
                grads.offsets.data[dxi] += d_sx;
            }
        }
    }
    Ok(grads)
}

/// Pooling direction for [`directional_pool`]. The name is the direction the
/// maxima travel: `Left` propagates values leftwards, i.e. each output pixel
/// sees the maximum over everything at or to its right.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolDirection {
    Left,
    Right,
    Up,
    Down,
}

/// Cumulative maximum from the far border towards each pixel, one axis at a
/// time (corner-pooling building block).
pub fn directional_pool(map: &FeatureMap, direction: PoolDirection) -> FeatureMap {
    let mut out = map.clone();
    let (h, w) = (map.height, map.width);
    for c in 0..map.channels {
        match direction {
            PoolDirection::Left => {
                for y in 0..h {
                    for x in (0..w.saturating_sub(1)).rev() {
                        let m = out.get(c, y, x).max(out.get(c, y, x + 1));
                        out.set(c, y, x, m);
                    }
                }
            }
            PoolDirection::Right => {
                for y in 0..h {
                    for x in 1..w {
                        let m = out.get(c, y, x).max(out.get(c, y, x - 1));
                        out.set(c, y, x, m);
                    }
                }
            }
            PoolDirection::Up => {
                for x in 0..w {
                    for y in (0..h.saturating_sub(1)).rev() {
                        let m = out.get(c, y, x).max(out.get(c, y + 1, x));
                        out.set(c, y, x, m);
                    }
                }
            }
            PoolDirection::Down => {
                for x in 0..w {
                    for y in 1..h {
                        let m = out.get(c, y, x).max(out.get(c, y - 1, x));
                        out.set(c, y, x, m);
                    }
                }
            }
        }
    }
    out
}
