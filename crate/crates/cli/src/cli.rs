//! Argument parsing and dispatch.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "midbox",
    version,
    about = "Oriented-box detection pipeline: target encoding, decoding, evaluation, synthetic scenes, tiling.",
    after_help = "Exit codes: 0 success, 2 input error, 3 internal error.\n\
                  MIDBOX_THREADS limits worker threads (default: all cores)."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render annotation JSONL into dense target maps (MTF + manifest).
    Encode {
        /// Annotation JSONL (one image per line).
        #[arg(long)]
        ann: PathBuf,
        /// Output directory for MTF files and manifest.json.
        #[arg(long)]
        out_dir: PathBuf,
        /// Grid stride in pixels.
        #[arg(long, default_value_t = 4)]
        stride: u32,
        /// Number of classes; inferred from the annotations when omitted.
        #[arg(long)]
        classes: Option<u32>,
    },
    /// Decode detections from maps (manifest.json or .mtf) or keypoint JSONL.
    Decode {
        /// manifest.json, a single .mtf file, or keypoint .jsonl.
        #[arg(long)]
        input: PathBuf,
        /// Output detection JSONL.
        #[arg(long)]
        out: PathBuf,
        /// Grid stride for bare .mtf inputs (manifests carry their own).
        #[arg(long, default_value_t = 4)]
        stride: u32,
        /// Minimum keypoint score.
        #[arg(long, default_value_t = 0.1)]
        score_thresh: f64,
        /// Keypoint candidates kept per channel (per class for centers).
        #[arg(long, default_value_t = 100)]
        topk: usize,
    },
    /// Score detections against ground truth (11-point interpolated AP).
    Eval {
        /// Ground-truth annotation JSONL.
        #[arg(long)]
        gt: PathBuf,
        /// Detection JSONL (objects carry a score).
        #[arg(long)]
        det: PathBuf,
        /// IoU threshold for a true positive.
        #[arg(long, default_value_t = 0.5)]
        iou_thr: f64,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic scenes from a JSON scene spec.
    Synth {
        /// Scene spec JSON file.
        #[arg(long)]
        spec: PathBuf,
        /// Output directory (gt.jsonl, keypoints.jsonl, optionally maps/).
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
        /// Also rasterize the noisy keypoints into MTF maps.
        #[arg(long, default_value_t = false)]
        emit_mtf: bool,
        /// Grid stride for --emit-mtf.
        #[arg(long, default_value_t = 4)]
        stride: u32,
    },
    /// Split annotations into overlapping tiles.
    Tile {
        /// Annotation JSONL.
        #[arg(long)]
        ann: PathBuf,
        /// Output tiled annotation JSONL.
        #[arg(long)]
        out: PathBuf,
        /// Tile side length in pixels.
        #[arg(long, default_value_t = 768)]
        size: u32,
        /// Overlap between adjacent tiles in pixels.
        #[arg(long, default_value_t = 200)]
        overlap: u32,
    },
}

/// Runs a parsed command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode { ann, out_dir, stride, classes } => {
            commands::cmd_encode(&ann, &out_dir, stride, classes)
        }
        Command::Decode { input, out, stride, score_thresh, topk } => {
            commands::cmd_decode(&input, &out, stride, score_thresh, topk)
        }
        Command::Eval { gt, det, iou_thr, out } => {
            commands::cmd_eval(&gt, &det, iou_thr, out.as_deref())
        }
        Command::Synth { spec, out_dir, seed, emit_mtf, stride } => {
            commands::cmd_synth(&spec, &out_dir, seed, emit_mtf, stride)
        }
        Command::Tile { ann, out, size, overlap } => {
            commands::cmd_tile(&ann, &out, size, overlap)
        }
    }
}
