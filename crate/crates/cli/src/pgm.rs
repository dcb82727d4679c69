//! Binary PGM (P5, maxval 255) emission for looking at motion fields.

use std::io::Write;
use std::path::Path;

use lightmotion::camera::MotionField;
use lightmotion::BoolGrid;

use crate::CliError;

/// Writes one 8-bit grayscale image.
pub fn write_pgm(path: &Path, width: usize, height: usize, bytes: &[u8]) -> Result<(), CliError> {
    assert_eq!(bytes.len(), width * height, "pixel buffer size");
    let mut buf = Vec::with_capacity(bytes.len() + 32);
    write!(buf, "P5\n{width} {height}\n255\n").expect("infallible vec write");
    buf.extend_from_slice(bytes);
    std::fs::write(path, buf)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

/// Forward-displacement magnitude of one frame, linearly scaled so the
/// frame's largest displacement maps to 255. A still frame renders black.
pub fn displacement_bytes(field: &MotionField, frame0: usize) -> Vec<u8> {
    let (h, w) = (field.height(), field.width());
    let mut mags = Vec::with_capacity(h * w);
    for r in 0..h {
        for k in 0..w {
            let (u, v) = field.forward_at(frame0, r, k);
            mags.push((u - k as f64).hypot(v - r as f64));
        }
    }
    let max = mags.iter().copied().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return vec![0; h * w];
    }
    mags.iter()
        .map(|&m| (255.0 * m / max).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// One frame of a boolean grid as a 0/255 image.
pub fn mask_bytes(grid: &BoolGrid, frame0: usize) -> Vec<u8> {
    let (h, w) = (grid.height(), grid.width());
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h {
        for k in 0..w {
            out.push(if grid.get(frame0, r, k) { 255 } else { 0 });
        }
    }
    out
}
