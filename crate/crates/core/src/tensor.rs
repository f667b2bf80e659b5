//! A minimal dense CHW tensor of 32-bit floats.

use crate::error::{Error, Result};

/// Row-major `[channels, height, width]` array of `f32`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 3],
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 3]) -> Self {
        let len = shape[0] * shape[1] * shape[2];
        Self { shape, data: vec![0.0; len] }
    }

    /// Wraps raw data, validating length and finiteness.
    pub fn from_vec(shape: [usize; 3], data: Vec<f32>) -> Result<Self> {
        let len = shape[0] * shape[1] * shape[2];
        if data.len() != len {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} wants {} values, got {}",
                shape,
                len,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value {} at flat index {i}",
                data[i]
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape[0]
    }

    pub fn height(&self) -> usize {
        self.shape[1]
    }

    pub fn width(&self) -> usize {
        self.shape[2]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    fn flat(&self, c: usize, y: usize, x: usize) -> usize {
        debug_assert!(c < self.shape[0] && y < self.shape[1] && x < self.shape[2]);
        (c * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.flat(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        let i = self.flat(c, y, x);
        self.data[i] = v;
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.shape[1] * self.shape[2];
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let plane = self.shape[1] * self.shape[2];
        &mut self.data[c * plane..(c + 1) * plane]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major_chw() {
        let mut t = Tensor::zeros([2, 3, 4]);
        t.set(1, 2, 3, 7.5);
        assert_eq!(t.get(1, 2, 3), 7.5);
        assert_eq!(t.data()[(1 * 3 + 2) * 4 + 3], 7.5);
        assert_eq!(t.channel(1)[2 * 4 + 3], 7.5);
    }

    #[test]
    fn from_vec_validates() {
        assert!(Tensor::from_vec([1, 2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::from_vec([1, 2, 2], vec![0.0, 1.0, f32::NAN, 2.0]).is_err());
        assert!(Tensor::from_vec([1, 2, 2], vec![0.0; 4]).is_ok());
    }
}
