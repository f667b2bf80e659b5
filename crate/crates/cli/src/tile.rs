//! Sliding-window tiling of annotations for large images.
//!
//! Tiles of a fixed size are laid on a grid whose stride is
//! `size - overlap`, starting at the origin, with enough tiles to cover the
//! full extent. Every box lands in each tile that contains its center
//! (half-open: `x0 <= cx < x0 + size`); coordinates are translated into
//! the tile frame, and boxes whose corners stick out of the tile keep their
//! full geometry but are flagged `truncated`.

use serde::{Deserialize, Serialize};

use crate::error::{AppError, Result};
use crate::io::records::{ImageRecord, ObjectRecord};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(default)]
pub struct TileSpec {
    pub size: u32,
    pub overlap: u32,
}

impl Default for TileSpec {
    fn default() -> Self {
        TileSpec { size: 768, overlap: 200 }
    }
}

impl TileSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.overlap >= self.size {
            return Err(AppError::input(format!(
                "tile spec requires 0 <= overlap < size, got size {} overlap {}",
                self.size, self.overlap
            )));
        }
        Ok(())
    }

    fn stride(&self) -> u64 {
        (self.size - self.overlap) as u64
    }

    /// Grid start coordinates covering an extent of `total` pixels.
    fn starts(&self, total: u32) -> Vec<u64> {
        let (size, total) = (self.size as u64, total as u64);
        if total <= size {
            return vec![0];
        }
        let stride = self.stride();
        let last = (total - size).div_ceil(stride);
        (0..=last).map(|i| i * stride).collect()
    }
}

/// Tiles one image's annotations; tile ids are `{image}__x{x0}_y{y0}`.
pub fn tile_image(record: &ImageRecord, spec: &TileSpec) -> Vec<ImageRecord> {
    let size = spec.size as f64;
    let mut out = Vec::new();
    for &y0 in &spec.starts(record.height) {
        for &x0 in &spec.starts(record.width) {
            let (fx0, fy0) = (x0 as f64, y0 as f64);
            let objects: Vec<ObjectRecord> = record
                .objects
                .iter()
                .filter(|o| {
                    o.cx >= fx0 && o.cx < fx0 + size && o.cy >= fy0 && o.cy < fy0 + size
                })
                .map(|o| {
                    let mut t = o.clone();
                    t.cx -= fx0;
                    t.cy -= fy0;
                    t.truncated = t.to_box().corners().iter().any(|c| {
                        c.x < 0.0 || c.x > size || c.y < 0.0 || c.y > size
                    });
                    t
                })
                .collect();
            out.push(ImageRecord {
                image: format!("{}__x{x0}_y{y0}", record.image),
                width: spec.size,
                height: spec.size,
                objects,
            });
        }
    }
    out
}

/// Tiles every record, preserving input order.
pub fn tile_records(records: &[ImageRecord], spec: &TileSpec) -> Result<Vec<ImageRecord>> {
    spec.validate()?;
    Ok(records.iter().flat_map(|r| tile_image(r, spec)).collect())
}
