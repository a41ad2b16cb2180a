//! 8-bit binary portable graymap output.

use std::fs;
use std::path::Path;

use ptyfuse_core::RealField;

use crate::error::{CliError, CliResult};

/// Values at or above this map to white.
pub const WHITE_LEVEL: f64 = 1.2;

/// Binary PGM bytes with `v / white` mapped linearly onto 0..=255 and clipped.
pub fn encode_pgm(image: &RealField, white: f64) -> Vec<u8> {
    let (ny, nx) = image.grid().dims();
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    out.extend(image.values().iter().map(|&v| {
        let t = if v.is_finite() {
            (v / white).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (t * 255.0).round() as u8
    }));
    out
}

pub fn write_pgm(path: &Path, image: &RealField) -> CliResult<()> {
    fs::write(path, encode_pgm(image, WHITE_LEVEL)).map_err(|e| CliError::io(path, e))
}
