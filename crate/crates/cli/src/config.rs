//! The JSON run configuration: a strict mirror of the library's run options
//! plus output selection. Unknown keys are fatal, presets and explicit
//! camera parameters are mutually exclusive, and expanding a config
//! materializes every default so the result can be echoed and re-run
//! byte-for-byte.

use std::fs;
use std::path::{Path, PathBuf};

use lightmotion::camera::{preset, Axis, CameraParams, RotationRamp};
use lightmotion::pipeline::MaskSource;
use lightmotion::resample::AxisPolicy;
use lightmotion::{MaskShape, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Rotation axis as it appears in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisOpt {
    X,
    Y,
    Z,
}

/// Rotation ramp as it appears in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampOpt {
    OneSided,
    Symmetric,
}

/// Resampling axis policy as it appears in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisPolicyOpt {
    Auto,
    Row,
    Column,
}

impl AxisPolicyOpt {
    fn to_core(self) -> AxisPolicy {
        match self {
            AxisPolicyOpt::Auto => AxisPolicy::Auto,
            AxisPolicyOpt::Row => AxisPolicy::Row,
            AxisPolicyOpt::Column => AxisPolicy::Column,
        }
    }
}

/// Explicit camera motion parameters; every field defaults to the still
/// camera so partial documents stay small.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraOpts {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
    pub axis: AxisOpt,
    pub f_x: f64,
    pub f_y: f64,
    pub c_x: Option<f64>,
    pub c_y: Option<f64>,
    pub rotation_ramp: RampOpt,
}

impl Default for CameraOpts {
    fn default() -> Self {
        CameraOpts::from_params(&CameraParams::identity())
    }
}

impl CameraOpts {
    pub fn to_params(&self) -> CameraParams {
        CameraParams {
            x: self.x,
            y: self.y,
            z: self.z,
            theta: self.theta,
            axis: match self.axis {
                AxisOpt::X => Axis::X,
                AxisOpt::Y => Axis::Y,
                AxisOpt::Z => Axis::Z,
            },
            f_x: self.f_x,
            f_y: self.f_y,
            c_x: self.c_x,
            c_y: self.c_y,
            rotation_ramp: match self.rotation_ramp {
                RampOpt::OneSided => RotationRamp::OneSided,
                RampOpt::Symmetric => RotationRamp::Symmetric,
            },
        }
    }

    pub fn from_params(p: &CameraParams) -> Self {
        CameraOpts {
            x: p.x,
            y: p.y,
            z: p.z,
            theta: p.theta,
            axis: match p.axis {
                Axis::X => AxisOpt::X,
                Axis::Y => AxisOpt::Y,
                Axis::Z => AxisOpt::Z,
            },
            f_x: p.f_x,
            f_y: p.f_y,
            c_x: p.c_x,
            c_y: p.c_y,
            rotation_ramp: match p.rotation_ramp {
                RotationRamp::OneSided => RampOpt::OneSided,
                RotationRamp::Symmetric => RampOpt::Symmetric,
            },
        }
    }
}

/// Foreground mask selection. `"none"`, a mask file, or an analytic shape
/// with `center`/`extents` given as `[row, col]` pairs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum MaskOpts {
    #[default]
    None,
    File {
        path: PathBuf,
    },
    Rect {
        center: [f64; 2],
        extents: [f64; 2],
    },
    Ellipse {
        center: [f64; 2],
        extents: [f64; 2],
    },
}

impl MaskOpts {
    pub fn to_source(&self) -> MaskSource {
        match self {
            MaskOpts::None => MaskSource::None,
            MaskOpts::File { path } => MaskSource::File(path.clone()),
            MaskOpts::Rect { center, extents } => MaskSource::Synth(MaskShape::Rect {
                center: (center[0], center[1]),
                extents: (extents[0], extents[1]),
            }),
            MaskOpts::Ellipse { center, extents } => MaskSource::Synth(MaskShape::Ellipse {
                center: (center[0], center[1]),
                extents: (extents[0], extents[1]),
            }),
        }
    }
}

/// External latent sources; both default to seeded draws.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatentPaths {
    /// Clean latent the oracle denoiser pulls toward.
    pub x0: Option<PathBuf>,
    /// Starting noise for the run.
    pub initial: Option<PathBuf>,
}

/// Parameters for the `probe` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeOpts {
    /// Monte-Carlo replicates per table row.
    pub n_samples: usize,
    /// Variance of the synthetic clean latents.
    pub x0_power: f64,
    /// Fixed assumed timestep for the mismatch probe; omitted means the
    /// oracle assumes the true timestep on every row.
    pub t_assumed: Option<usize>,
}

impl Default for ProbeOpts {
    fn default() -> Self {
        ProbeOpts {
            n_samples: 16,
            x0_power: 1.0,
            t_assumed: None,
        }
    }
}

/// Which artifacts a run writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmitFlags {
    /// The six latent snapshots around the update and renoise boundaries.
    pub snapshots: bool,
    /// Per-step predicted-noise variance table.
    pub variance_csv: bool,
    /// Fill provenance table for the exposed region.
    pub provenance_csv: bool,
    /// Per-frame displacement and new-perspective images.
    pub field_pgm: bool,
    /// Per-frame foreground mask images.
    pub mask_pgm: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        EmitFlags {
            snapshots: true,
            variance_csv: true,
            provenance_csv: true,
            field_pgm: false,
            mask_pgm: false,
        }
    }
}

/// The config document. Pipeline fields default to the library's standard
/// run; `output_dir` is required by the commands that write artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub seed: u64,
    pub ddim_steps: usize,
    pub update_index: usize,
    pub stop_index: usize,
    pub renoise_index: usize,
    pub correction_enabled: bool,
    pub n_frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub axis_policy: AxisPolicyOpt,
    pub preset: Option<String>,
    pub camera: Option<CameraOpts>,
    pub mask: MaskOpts,
    pub latents: LatentPaths,
    pub probe: ProbeOpts,
    pub emit: EmitFlags,
    pub output_dir: Option<PathBuf>,
}

impl Default for CliConfig {
    fn default() -> Self {
        let base = PipelineConfig::with_defaults(CameraParams::identity(), 0);
        CliConfig {
            seed: base.seed,
            ddim_steps: base.ddim_steps,
            update_index: base.update_index,
            stop_index: base.stop_index,
            renoise_index: base.renoise_index,
            correction_enabled: base.correction_enabled,
            n_frames: base.n_frames,
            channels: base.channels,
            height: base.height,
            width: base.width,
            axis_policy: AxisPolicyOpt::Auto,
            preset: None,
            camera: None,
            mask: MaskOpts::None,
            latents: LatentPaths::default(),
            probe: ProbeOpts::default(),
            emit: EmitFlags::default(),
            output_dir: None,
        }
    }
}

/// The name of the echoed config file inside the output directory.
pub const EFFECTIVE_CONFIG_FILE: &str = "effective-config.json";

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Expands the preset and pins the camera explicitly, so the result is
    /// self-contained: echoing it and running again changes nothing.
    pub fn effective(&self) -> Result<CliConfig, CliError> {
        let camera = match (&self.preset, &self.camera) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "preset and camera are mutually exclusive; give one or neither".to_string(),
                ));
            }
            (Some(name), None) => preset(name)
                .ok_or_else(|| CliError::Config(format!("unknown preset `{name}`")))?,
            (None, Some(opts)) => opts.to_params(),
            (None, None) => CameraParams::identity(),
        };
        let mut out = self.clone();
        out.preset = None;
        out.camera = Some(CameraOpts::from_params(&camera));
        Ok(out)
    }

    /// Builds the library config; call on an expanded document.
    pub fn pipeline_config(&self) -> PipelineConfig {
        let camera = self
            .camera
            .as_ref()
            .map(CameraOpts::to_params)
            .unwrap_or_else(CameraParams::identity);
        PipelineConfig {
            ddim_steps: self.ddim_steps,
            update_index: self.update_index,
            stop_index: self.stop_index,
            renoise_index: self.renoise_index,
            seed: self.seed,
            camera,
            correction_enabled: self.correction_enabled,
            mask_source: self.mask.to_source(),
            axis_policy: self.axis_policy.to_core(),
            n_frames: self.n_frames,
            channels: self.channels,
            height: self.height,
            width: self.width,
        }
    }

    pub fn require_output_dir(&self) -> Result<&Path, CliError> {
        self.output_dir
            .as_deref()
            .ok_or_else(|| CliError::Config("output_dir is required".to_string()))
    }

    /// Writes the expanded document next to the artifacts it produced.
    pub fn echo(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Runtime(format!("serializing effective config: {e}")))?;
        fs::write(dir.join(EFFECTIVE_CONFIG_FILE), text + "\n")
            .map_err(|e| CliError::Runtime(format!("writing effective config: {e}")))
    }
}
