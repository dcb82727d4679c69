//! Applying a motion field to a latent video.
//!
//! The update is an inverse-map gather: each target pixel pulls its value
//! from the source position the field's inverse grid names for it. Gathering
//! leaves no holes inside the frame, and for integer translations it agrees
//! exactly with scattering sources to targets. Target pixels whose source
//! falls outside the frame are left at zero and reported in the returned
//! mask for the resampling stage to fill.

use rayon::prelude::*;

use crate::camera::MotionField;
use crate::error::{Error, Result};
use crate::tensorio::{BoolGrid, LatentVideo};

/// Gathers `z` through `field`, returning the updated latent and the mask
/// of unfilled target pixels (a copy of the field's new-perspective mask).
///
/// Fields with a zoom component sample bilinearly; all others snap to the
/// nearest source pixel, which makes integer-translation fields exact
/// copies. Every channel of a pixel is transported identically.
pub fn apply_permutation(z: &LatentVideo, field: &MotionField) -> Result<(LatentVideo, BoolGrid)> {
    let (n, c, h, w) = z.shape();
    if n != field.n_frames() || h != field.height() || w != field.width() {
        return Err(Error::Shape {
            expected: format!("{}x{{C}}x{}x{}", field.n_frames(), field.height(), field.width()),
            actual: z.shape_string(),
        });
    }
    let frame_len = c * h * w;
    let plane = h * w;
    let mut out = vec![0.0f32; n * frame_len];
    let src = z.data();
    out.par_chunks_mut(frame_len)
        .enumerate()
        .for_each(|(frame, out_frame)| {
            let src_frame = &src[frame * frame_len..(frame + 1) * frame_len];
            for r in 0..h {
                for k in 0..w {
                    if field.new_mask().get(frame, r, k) {
                        continue;
                    }
                    let (su, sv) = field.inverse_at(frame, r, k);
                    if field.uses_interpolation() {
                        let u0 = su.floor() as usize;
                        let v0 = sv.floor() as usize;
                        let u1 = (u0 + 1).min(w - 1);
                        let v1 = (v0 + 1).min(h - 1);
                        let fu = su - u0 as f64;
                        let fv = sv - v0 as f64;
                        for ch in 0..c {
                            let at = |row: usize, col: usize| {
                                src_frame[ch * plane + row * w + col] as f64
                            };
                            let top = (1.0 - fu) * at(v0, u0) + fu * at(v0, u1);
                            let bot = (1.0 - fu) * at(v1, u0) + fu * at(v1, u1);
                            out_frame[ch * plane + r * w + k] =
                                ((1.0 - fv) * top + fv * bot) as f32;
                        }
                    } else {
                        let uc = su.round() as usize;
                        let vc = sv.round() as usize;
                        for ch in 0..c {
                            out_frame[ch * plane + r * w + k] =
                                src_frame[ch * plane + vc * w + uc];
                        }
                    }
                }
            }
        });
    let updated = LatentVideo::new(n, c, h, w, out)?;
    Ok((updated, field.new_mask().clone()))
}
