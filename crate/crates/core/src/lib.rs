//! Anchor-free oriented-box detection primitives.
//!
//! The crate covers the full geometric path of a midpoint-based oriented
//! detector, independent of any particular network backbone:
//!
//! * [`geom`] — oriented boxes, canonical angles, the five-keypoint
//!   encoding (four edge midpoints plus the center, each midpoint carrying
//!   a centripetal shift back towards the center), and the inverse:
//!   center refinement, orientation solving, and box reconstruction.
//! * [`heatmap`] — rendering keypoints into training targets (Gaussian
//!   heatmaps, shift/radius regression maps, position masks), peak
//!   extraction, and the training losses.
//! * [`matcher`] — grouping decoded center and midpoint candidates into
//!   objects via shift-corrected nearest-center assignment with adaptive
//!   radii and rebuilding scored oriented boxes.
//! * [`symdcn`] — a small CPU reference of symmetric deformable
//!   convolution: bilinear-sampled convolution driven by an offset field,
//!   a paired branch sampling at doubled offsets, analytic gradients, and
//!   directional max pooling.
//! * [`eval`] — exact rotated-box IoU through convex polygon clipping and
//!   11-point interpolated average precision.
//!
//! Everything is deterministic and pure-CPU; the numeric conventions are
//! frozen by the unit tests next to each module.

pub mod error;
pub mod eval;
pub mod geom;
pub mod heatmap;
pub mod matcher;
pub mod symdcn;
pub mod tensor;

pub use error::{Error, Result};
pub use geom::{Angle, OrientedBox, Point2};
