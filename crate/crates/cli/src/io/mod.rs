//! File formats: the MTF tensor container and JSONL record schemas.

pub mod mtf;
pub mod records;
