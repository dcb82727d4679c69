//! Foreground masks from precomputed cross-attention maps, plus synthetic
//! masks for tests and runs without attention data.
//!
//! An attention map arrives as per-frame rows of token scores, one score
//! vector per spatial position. Selecting a token column and reshaping it
//! to the frame grid gives a relevance image; thresholding that image
//! against a multiple of its per-frame mean and smoothing with one majority
//! vote yields the binary foreground mask that constrains resampling.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensorio::{read_lmt, BoolGrid, LatentVideo};

/// Binary foreground mask, true where the object sits.
pub type ForegroundMask = BoolGrid;

/// Cross-attention scores of shape frames x (height*width) x tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    n_frames: usize,
    n_tokens: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl AttentionMap {
    /// Validates and wraps raw scores laid out position-major: the value
    /// for frame `i`, position `p`, token `l` sits at `(i*h*w + p)*L + l`.
    pub fn new(
        n_frames: usize,
        n_tokens: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let expected = n_frames * n_tokens * height * width;
        if data.len() != expected {
            return Err(Error::Shape {
                expected: format!("{expected} values"),
                actual: format!("{}", data.len()),
            });
        }
        if expected == 0 {
            return Err(Error::Parameter {
                field: "shape",
                reason: "attention map dimensions must all be positive".to_string(),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Parameter {
                field: "data",
                reason: format!("attention scores must be finite and non-negative, found {bad}"),
            });
        }
        Ok(AttentionMap {
            n_frames,
            n_tokens,
            height,
            width,
            data,
        })
    }

    /// Frame count.
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    /// Token count.
    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    /// Frame height.
    pub fn height(&self) -> usize {
        self.height
    }

    /// Frame width.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Score of one token at one spatial position.
    pub fn get(&self, frame: usize, position: usize, token: usize) -> f32 {
        self.data[(frame * self.height * self.width + position) * self.n_tokens + token]
    }

    /// Reshapes one token's scores to a single-channel spatial grid.
    pub fn extract_token_map(&self, token_index: usize) -> Result<LatentVideo> {
        if token_index >= self.n_tokens {
            return Err(Error::TokenIndex {
                index: token_index,
                n_tokens: self.n_tokens,
            });
        }
        let (n, h, w) = (self.n_frames, self.height, self.width);
        Ok(LatentVideo::from_fn(n, 1, h, w, |i, _, r, k| {
            self.get(i, r * w + k, token_index)
        }))
    }
}

/// Converts a latent-layout tensor (channels = tokens) into an attention
/// map, transposing from channel-major to position-major order.
pub fn attention_from_latent(v: &LatentVideo) -> Result<AttentionMap> {
    let (n, l, h, w) = v.shape();
    let mut data = vec![0.0f32; n * l * h * w];
    for i in 0..n {
        for r in 0..h {
            for k in 0..w {
                for t in 0..l {
                    data[(i * h * w + r * w + k) * l + t] = v.get(i, t, r, k);
                }
            }
        }
    }
    AttentionMap::new(n, l, h, w, data)
}

/// Reads an attention map stored as a latent file whose channel dimension
/// carries the tokens.
pub fn read_attention_lmt(path: &Path) -> Result<AttentionMap> {
    attention_from_latent(&read_lmt(path)?)
}

fn majority_pass(mask: &BoolGrid, window: usize) -> BoolGrid {
    if window == 1 {
        return mask.clone();
    }
    let (n, h, w) = (mask.n_frames(), mask.height(), mask.width());
    let reach = (window / 2) as isize;
    let mut out = BoolGrid::filled(n, h, w, false);
    for i in 0..n {
        for r in 0..h {
            for k in 0..w {
                let r0 = (r as isize - reach).max(0) as usize;
                let r1 = ((r as isize + reach) as usize).min(h - 1);
                let k0 = (k as isize - reach).max(0) as usize;
                let k1 = ((k as isize + reach) as usize).min(w - 1);
                let total = (r1 - r0 + 1) * (k1 - k0 + 1);
                let mut trues = 0;
                for rr in r0..=r1 {
                    for kk in k0..=k1 {
                        if mask.get(i, rr, kk) {
                            trues += 1;
                        }
                    }
                }
                let value = if 2 * trues > total {
                    true
                } else if 2 * trues < total {
                    false
                } else {
                    mask.get(i, r, k)
                };
                out.set(i, r, k, value);
            }
        }
    }
    out
}

/// Thresholds a relevance grid per frame and smooths the result.
///
/// A pixel is foreground when its value strictly exceeds `threshold_factor`
/// times the frame's mean value; one majority vote over the
/// `refine_window`-square neighborhood (clipped at borders, ties keeping
/// the current value) then removes speckle. Window 1 skips the vote.
pub fn binarize_refine(
    grid: &LatentVideo,
    threshold_factor: f64,
    refine_window: usize,
) -> Result<ForegroundMask> {
    if !(threshold_factor > 0.0 && threshold_factor.is_finite()) {
        return Err(Error::Parameter {
            field: "threshold_factor",
            reason: format!("{threshold_factor} must be positive"),
        });
    }
    if refine_window == 0 || refine_window % 2 == 0 {
        return Err(Error::Parameter {
            field: "refine_window",
            reason: format!("{refine_window} must be an odd integer at least 1"),
        });
    }
    let (n, c, h, w) = grid.shape();
    if c != 1 {
        return Err(Error::Shape {
            expected: "single-channel grid".to_string(),
            actual: grid.shape_string(),
        });
    }
    if !grid.data().iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric {
            context: "binarize_refine input grid".to_string(),
        });
    }
    let mut mask = BoolGrid::filled(n, h, w, false);
    for i in 0..n {
        let mut sum = 0.0f64;
        for r in 0..h {
            for k in 0..w {
                sum += grid.get(i, 0, r, k) as f64;
            }
        }
        let threshold = threshold_factor * sum / (h * w) as f64;
        for r in 0..h {
            for k in 0..w {
                if grid.get(i, 0, r, k) as f64 > threshold {
                    mask.set(i, r, k, true);
                }
            }
        }
    }
    Ok(majority_pass(&mask, refine_window))
}

/// Shape of a synthetic foreground mask. Centers and extents are in pixel
/// units and may be fractional; a zero extent collapses that axis to exact
/// coordinate equality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskShape {
    Rect {
        center: (f64, f64),
        extents: (f64, f64),
    },
    Ellipse {
        center: (f64, f64),
        extents: (f64, f64),
    },
}

/// Rasterizes a shape identically into every frame.
pub fn synth_mask(shape: MaskShape, n_frames: usize, h: usize, w: usize) -> Result<ForegroundMask> {
    let (center, extents) = match shape {
        MaskShape::Rect { center, extents } | MaskShape::Ellipse { center, extents } => {
            (center, extents)
        }
    };
    let (cr, cc) = center;
    let (er, ec) = extents;
    for (field, v) in [("center", cr), ("center", cc), ("extents", er), ("extents", ec)] {
        if !v.is_finite() {
            return Err(Error::Parameter {
                field,
                reason: format!("{v} is not finite"),
            });
        }
    }
    if er < 0.0 || ec < 0.0 {
        return Err(Error::Parameter {
            field: "extents",
            reason: "must be non-negative".to_string(),
        });
    }
    if cr - er < 0.0 || cr + er > (h - 1) as f64 || cc - ec < 0.0 || cc + ec > (w - 1) as f64 {
        return Err(Error::Parameter {
            field: "extents",
            reason: format!(
                "shape [{:.1}, {:.1}] x [{:.1}, {:.1}] exceeds the {h}x{w} frame",
                cr - er,
                cr + er,
                cc - ec,
                cc + ec
            ),
        });
    }
    let inside = |r: usize, k: usize| -> bool {
        let dr = r as f64 - cr;
        let dk = k as f64 - cc;
        match shape {
            MaskShape::Rect { .. } => dr.abs() <= er && dk.abs() <= ec,
            MaskShape::Ellipse { .. } => {
                let tr = if er == 0.0 {
                    if dr == 0.0 { 0.0 } else { return false }
                } else {
                    (dr / er) * (dr / er)
                };
                let tk = if ec == 0.0 {
                    if dk == 0.0 { 0.0 } else { return false }
                } else {
                    (dk / ec) * (dk / ec)
                };
                tr + tk <= 1.0
            }
        }
    };
    let mut mask = BoolGrid::filled(n_frames, h, w, false);
    for r in 0..h {
        for k in 0..w {
            if inside(r, k) {
                for i in 0..n_frames {
                    mask.set(i, r, k, true);
                }
            }
        }
    }
    Ok(mask)
}
