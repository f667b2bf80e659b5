//! `midbox`: the command-line pipeline around the oriented-box core.
//!
//! Five subcommands cover the detection workflow end to end without any
//! network in the loop: `encode` renders annotations into dense target
//! maps, `decode` turns maps or raw keypoints back into detections, `eval`
//! scores detections with rotated-IoU 11-point AP, `synth` fabricates
//! seeded scenes with a configurable noise model, and `tile` splits large
//! images into overlapping crops.
//!
//! All file formats are defined in [`io`]: the MTF tensor container and
//! the JSONL record schemas.

pub mod cli;
pub mod commands;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod synth;
pub mod tile;

pub use error::{AppError, Result};
