//! Per-frame camera coordinate maps and the masks they induce.
//!
//! User motion parameters (horizontal/vertical pan ratios, zoom ratio,
//! rotation half-range in degrees) expand into one coordinate transform per
//! frame. Each transform is the composition pan after zoom after rotation,
//! where rotation is the depth-free pinhole conjugation: lift a pixel to a
//! unit-depth ray with the inverse intrinsics, rotate the ray, and project
//! back. Depth cancels in that conjugation, so no depth map is consumed.
//!
//! Coordinates are `(u, v)` with `u` horizontal (column) and `v` vertical
//! (row). Frame indices fed to the per-frame formulas are one-based,
//! `i in 1..=n_frames`; dense grids inside [`MotionField`] are zero-based.

use crate::error::{Error, Result};
use crate::tensorio::BoolGrid;

/// Default latent-space focal length for both axes.
pub const DEFAULT_FOCAL: f64 = 15.0;

/// Rotation axis of the camera. `Y` yaws left/right, `X` tilts up/down,
/// `Z` rolls about the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Axis {
    X,
    #[default]
    Y,
    Z,
}

/// How the per-frame rotation angle ramps across the clip.
///
/// `OneSided` sweeps from `-2*theta*(n-1)/n` at the first frame to exactly
/// zero at the last. `Symmetric` sweeps from `-theta` to `+theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RotationRamp {
    #[default]
    OneSided,
    Symmetric,
}

/// User-facing camera motion parameters.
///
/// `x` and `y` are pan distances at the final frame as ratios of width and
/// height; `z` is the zoom ratio at the final frame; `theta` is the rotation
/// half-range in degrees. `c_x`/`c_y` default to the frame center when left
/// unset.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraParams {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
    pub axis: Axis,
    pub f_x: f64,
    pub f_y: f64,
    pub c_x: Option<f64>,
    pub c_y: Option<f64>,
    pub rotation_ramp: RotationRamp,
}

impl Default for CameraParams {
    fn default() -> Self {
        CameraParams {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            theta: 0.0,
            axis: Axis::Y,
            f_x: DEFAULT_FOCAL,
            f_y: DEFAULT_FOCAL,
            c_x: None,
            c_y: None,
            rotation_ramp: RotationRamp::OneSided,
        }
    }
}

impl CameraParams {
    /// Identity motion: every frame maps onto itself.
    pub fn identity() -> Self {
        Self::default()
    }

    /// Checks field ranges, returning a parameter error naming the first
    /// offending field.
    pub fn validate(&self) -> Result<()> {
        for (field, value, limit) in [("x", self.x, 1.0), ("y", self.y, 1.0), ("z", self.z, 1.0)] {
            if !(value.is_finite() && value.abs() <= limit) {
                return Err(Error::Parameter {
                    field,
                    reason: format!("{value} outside [-{limit}, {limit}]"),
                });
            }
        }
        if !self.theta.is_finite() {
            return Err(Error::Parameter {
                field: "theta",
                reason: format!("{} is not finite", self.theta),
            });
        }
        for (field, value) in [("f_x", self.f_x), ("f_y", self.f_y)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Parameter {
                    field,
                    reason: format!("{value} must be positive"),
                });
            }
        }
        for (field, value) in [("c_x", self.c_x), ("c_y", self.c_y)] {
            if let Some(c) = value {
                if !c.is_finite() {
                    return Err(Error::Parameter {
                        field,
                        reason: format!("{c} is not finite"),
                    });
                }
            }
        }
        Ok(())
    }

    fn center(&self, h: usize, w: usize) -> (f64, f64) {
        (
            self.c_x.unwrap_or(w as f64 / 2.0),
            self.c_y.unwrap_or(h as f64 / 2.0),
        )
    }
}

/// Translation applied to frame `i` of `n`: `(x*w*i/n, y*h*i/n)`.
pub fn pan_map(params: &CameraParams, i: usize, n_frames: usize, h: usize, w: usize) -> (f64, f64) {
    assert!(i >= 1 && i <= n_frames, "frame index {i} out of 1..={n_frames}");
    let frac = i as f64 / n_frames as f64;
    (params.x * w as f64 * frac, params.y * h as f64 * frac)
}

/// Scale factor for frame `i` of `n`: `1 + z*i/n`, applied about the
/// optical center. A non-positive scale collapses the frame.
pub fn zoom_map(params: &CameraParams, i: usize, n_frames: usize) -> Result<f64> {
    assert!(i >= 1 && i <= n_frames, "frame index {i} out of 1..={n_frames}");
    let s = 1.0 + params.z * i as f64 / n_frames as f64;
    if s <= 0.0 {
        return Err(Error::Parameter {
            field: "z",
            reason: format!("zoom scale {s} at frame {i} collapses the frame"),
        });
    }
    Ok(s)
}

/// Rotation angle in degrees for frame `i` of `n` under the configured ramp.
pub fn gamma(params: &CameraParams, i: usize, n_frames: usize) -> f64 {
    assert!(i >= 1 && i <= n_frames, "frame index {i} out of 1..={n_frames}");
    let theta = params.theta;
    match params.rotation_ramp {
        RotationRamp::OneSided => {
            2.0 * theta / n_frames as f64 * (i as f64 - n_frames as f64)
        }
        RotationRamp::Symmetric => {
            if n_frames == 1 {
                0.0
            } else {
                -theta + 2.0 * theta * (i - 1) as f64 / (n_frames - 1) as f64
            }
        }
    }
}

/// One frame's rotation as a closed-form projective map on pixel
/// coordinates. Constructed by [`rotate_map`].
#[derive(Debug, Clone, Copy)]
pub struct RotationMap {
    axis: Axis,
    gamma_degrees: f64,
    sin: f64,
    cos: f64,
    f_x: f64,
    f_y: f64,
    c_x: f64,
    c_y: f64,
}

impl RotationMap {
    /// Angle this map rotates by, in degrees.
    pub fn gamma_degrees(&self) -> f64 {
        self.gamma_degrees
    }

    /// Maps a source pixel to its rotated position.
    pub fn forward(&self, u: f64, v: f64) -> (f64, f64) {
        self.apply(self.sin, self.cos, u, v)
    }

    /// Maps a target pixel back to its source; the rotation conjugation
    /// inverts exactly by negating the angle.
    pub fn inverse(&self, u: f64, v: f64) -> (f64, f64) {
        self.apply(-self.sin, self.cos, u, v)
    }

    fn apply(&self, sin: f64, cos: f64, u: f64, v: f64) -> (f64, f64) {
        let du = u - self.c_x;
        let dv = v - self.c_y;
        match self.axis {
            Axis::Y => {
                let den = self.f_x * cos - sin * du;
                (
                    self.c_x + self.f_x * (cos * du + sin * self.f_x) / den,
                    self.c_y + self.f_x * dv / den,
                )
            }
            Axis::X => {
                let den = self.f_y * cos + sin * dv;
                (
                    self.c_x + self.f_y * du / den,
                    self.c_y + self.f_y * (cos * dv - sin * self.f_y) / den,
                )
            }
            Axis::Z => (
                self.c_x + cos * du - sin * (self.f_x / self.f_y) * dv,
                self.c_y + sin * (self.f_y / self.f_x) * du + cos * dv,
            ),
        }
    }

    /// Smallest projective denominator magnitude over the frame's integer
    /// pixels, across both map directions. The Z axis has no denominator
    /// and reports infinity.
    fn min_abs_denominator(&self, h: usize, w: usize) -> f64 {
        let mut min = f64::INFINITY;
        match self.axis {
            Axis::Y => {
                for u in 0..w {
                    let du = u as f64 - self.c_x;
                    min = min
                        .min((self.f_x * self.cos - self.sin * du).abs())
                        .min((self.f_x * self.cos + self.sin * du).abs());
                }
            }
            Axis::X => {
                for v in 0..h {
                    let dv = v as f64 - self.c_y;
                    min = min
                        .min((self.f_y * self.cos + self.sin * dv).abs())
                        .min((self.f_y * self.cos - self.sin * dv).abs());
                }
            }
            Axis::Z => {}
        }
        min
    }
}

/// Builds the projective rotation map for frame `i` of `n`. The optical
/// center defaults to the frame center when the parameters leave it unset.
pub fn rotate_map(
    params: &CameraParams,
    i: usize,
    n_frames: usize,
    h: usize,
    w: usize,
) -> RotationMap {
    let gamma_degrees = gamma(params, i, n_frames);
    let radians = gamma_degrees.to_radians();
    let (c_x, c_y) = params.center(h, w);
    RotationMap {
        axis: params.axis,
        gamma_degrees,
        sin: radians.sin(),
        cos: radians.cos(),
        f_x: params.f_x,
        f_y: params.f_y,
        c_x,
        c_y,
    }
}

/// One frame's full transform: rotation, then zoom about the center, then
/// pan.
#[derive(Debug, Clone, Copy)]
pub struct FrameMap {
    delta: (f64, f64),
    scale: f64,
    c_x: f64,
    c_y: f64,
    rotation: RotationMap,
}

impl FrameMap {
    /// Source pixel to target position.
    pub fn forward(&self, u: f64, v: f64) -> (f64, f64) {
        let (ru, rv) = self.rotation.forward(u, v);
        let zu = self.c_x + self.scale * (ru - self.c_x);
        let zv = self.c_y + self.scale * (rv - self.c_y);
        (zu + self.delta.0, zv + self.delta.1)
    }

    /// Target pixel back to its source position.
    pub fn inverse(&self, u: f64, v: f64) -> (f64, f64) {
        let pu = u - self.delta.0;
        let pv = v - self.delta.1;
        let zu = self.c_x + (pu - self.c_x) / self.scale;
        let zv = self.c_y + (pv - self.c_y) / self.scale;
        self.rotation.inverse(zu, zv)
    }

    /// The pan translation this frame applies.
    pub fn delta(&self) -> (f64, f64) {
        self.delta
    }

    /// The zoom scale this frame applies.
    pub fn scale(&self) -> f64 {
        self.scale
    }
}

/// Resolves the complete transform for frame `i` of `n`.
pub fn frame_map(
    params: &CameraParams,
    i: usize,
    n_frames: usize,
    h: usize,
    w: usize,
) -> Result<FrameMap> {
    let delta = pan_map(params, i, n_frames, h, w);
    let scale = zoom_map(params, i, n_frames)?;
    let rotation = rotate_map(params, i, n_frames, h, w);
    let (c_x, c_y) = params.center(h, w);
    Ok(FrameMap {
        delta,
        scale,
        c_x,
        c_y,
        rotation,
    })
}

/// Dense per-frame coordinate grids plus the new-perspective mask.
///
/// `forward` holds each source pixel's target position; `inverse` holds
/// each target pixel's source position. `new_mask` is true at target pixels
/// whose source falls outside the frame under the sampling rule the field
/// was built for: continuous bounds `[0, w-1] x [0, h-1]` when any zoom
/// component forces interpolation, nearest-pixel bounds otherwise.
#[derive(Debug, Clone)]
pub struct MotionField {
    n_frames: usize,
    height: usize,
    width: usize,
    forward: Vec<[f64; 2]>,
    inverse: Vec<[f64; 2]>,
    new_mask: BoolGrid,
    uses_interpolation: bool,
}

impl MotionField {
    /// Frame count.
    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    /// Frame height in pixels.
    pub fn height(&self) -> usize {
        self.height
    }

    /// Frame width in pixels.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Whether gathering through this field interpolates bilinearly
    /// rather than snapping to the nearest source pixel.
    pub fn uses_interpolation(&self) -> bool {
        self.uses_interpolation
    }

    /// Target pixels with no in-frame source.
    pub fn new_mask(&self) -> &BoolGrid {
        &self.new_mask
    }

    fn idx(&self, frame: usize, row: usize, col: usize) -> usize {
        debug_assert!(frame < self.n_frames && row < self.height && col < self.width);
        (frame * self.height + row) * self.width + col
    }

    /// Target position of source pixel `(row, col)` in zero-based `frame`.
    pub fn forward_at(&self, frame: usize, row: usize, col: usize) -> (f64, f64) {
        let p = self.forward[self.idx(frame, row, col)];
        (p[0], p[1])
    }

    /// Source position of target pixel `(row, col)` in zero-based `frame`.
    pub fn inverse_at(&self, frame: usize, row: usize, col: usize) -> (f64, f64) {
        let p = self.inverse[self.idx(frame, row, col)];
        (p[0], p[1])
    }
}

/// Whether a continuous source position can be sampled under the field's
/// rule: bilinear needs the full four-corner neighborhood inside the frame,
/// nearest-neighbor needs the rounded pixel inside it.
fn source_in_bounds(u: f64, v: f64, h: usize, w: usize, interpolate: bool) -> bool {
    let (max_u, max_v) = ((w - 1) as f64, (h - 1) as f64);
    if interpolate {
        u >= 0.0 && u <= max_u && v >= 0.0 && v <= max_v
    } else {
        let (ru, rv) = (u.round(), v.round());
        ru >= 0.0 && ru <= max_u && rv >= 0.0 && rv <= max_v
    }
}

/// Builds dense forward and inverse grids for every frame and derives the
/// new-perspective mask from the inverse grid.
pub fn build_motion_field(
    params: &CameraParams,
    n_frames: usize,
    h: usize,
    w: usize,
) -> Result<MotionField> {
    params.validate()?;
    for (field, value) in [("n_frames", n_frames), ("h", h), ("w", w)] {
        if value == 0 {
            return Err(Error::Parameter {
                field,
                reason: "must be at least 1".to_string(),
            });
        }
    }
    let uses_interpolation = params.z != 0.0;
    let per_frame = h * w;
    let mut forward = vec![[0.0f64; 2]; n_frames * per_frame];
    let mut inverse = vec![[0.0f64; 2]; n_frames * per_frame];
    let mut new_mask = BoolGrid::filled(n_frames, h, w, false);
    for i in 1..=n_frames {
        let fm = frame_map(params, i, n_frames, h, w)?;
        if fm.rotation.min_abs_denominator(h, w) < 1e-9 {
            return Err(Error::DegenerateProjection {
                gamma_degrees: fm.rotation.gamma_degrees(),
            });
        }
        let base = (i - 1) * per_frame;
        for r in 0..h {
            for k in 0..w {
                let at = base + r * w + k;
                let (fu, fv) = fm.forward(k as f64, r as f64);
                forward[at] = [fu, fv];
                let (su, sv) = fm.inverse(k as f64, r as f64);
                inverse[at] = [su, sv];
                if !source_in_bounds(su, sv, h, w, uses_interpolation) {
                    new_mask.set(i - 1, r, k, true);
                }
            }
        }
    }
    Ok(MotionField {
        n_frames,
        height: h,
        width: w,
        forward,
        inverse,
        new_mask,
        uses_interpolation,
    })
}

/// Named motion presets.
///
/// Pan presets move a quarter or half frame by the last frame; zoom presets
/// scale by 24% or 48%; rotation presets sweep an 8 or 16 degree half-range
/// about the Y axis. Negative pan is leftward/upward, positive rightward/
/// downward; positive theta is counterclockwise.
pub const PRESET_NAMES: [&str; 16] = [
    "pan-left-small",
    "pan-left-large",
    "pan-right-small",
    "pan-right-large",
    "pan-up-small",
    "pan-up-large",
    "pan-down-small",
    "pan-down-large",
    "zoom-in-small",
    "zoom-in-large",
    "zoom-out-small",
    "zoom-out-large",
    "rot-ccw-small",
    "rot-ccw-large",
    "rot-cw-small",
    "rot-cw-large",
];

/// Looks up a preset by name, returning `None` for unknown names.
pub fn preset(name: &str) -> Option<CameraParams> {
    let mut p = CameraParams::identity();
    match name {
        "pan-left-small" => p.x = -0.25,
        "pan-left-large" => p.x = -0.50,
        "pan-right-small" => p.x = 0.25,
        "pan-right-large" => p.x = 0.50,
        "pan-up-small" => p.y = -0.25,
        "pan-up-large" => p.y = -0.50,
        "pan-down-small" => p.y = 0.25,
        "pan-down-large" => p.y = 0.50,
        "zoom-in-small" => p.z = 0.24,
        "zoom-in-large" => p.z = 0.48,
        "zoom-out-small" => p.z = -0.24,
        "zoom-out-large" => p.z = -0.48,
        "rot-ccw-small" => p.theta = 8.0,
        "rot-ccw-large" => p.theta = 16.0,
        "rot-cw-small" => p.theta = -8.0,
        "rot-cw-large" => p.theta = -16.0,
        _ => return None,
    }
    Some(p)
}
