//! The full camera-motion run: noise, denoise, shift, refill, renoise.
//!
//! A run is four deterministic phases over one latent video. Fresh noise is
//! denoised partway down the schedule, the camera update permutes every
//! frame and fills the exposed region from background content, denoising
//! continues to the stop index, and (unless disabled) a single renoise step
//! re-randomizes the latent partway up so the remaining steps can blend the
//! seams introduced by the update.
//!
//! Indices named here count DDIM steps, not training timesteps: index `k`
//! means the `k`-th entry of the schedule's DDIM subsequence, so `T` is the
//! start of sampling and index 1 is the last executed step.

use std::path::PathBuf;

use crate::attnmask::{synth_mask, MaskShape};
use crate::camera::{build_motion_field, CameraParams};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::permute::apply_permutation;
use crate::resample::{resample_all, AxisPolicy, SampleProvenance};
use crate::rng::{CounterRng, STREAM_INIT_NOISE, STREAM_RENOISE};
use crate::schedule::NoiseSchedule;
use crate::tensorio::{read_mask_lmt, BoolGrid, LatentVideo};

/// Where the foreground mask protecting moving subjects comes from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum MaskSource {
    /// No foreground: every non-exposed pixel is a valid background source.
    #[default]
    None,
    /// Load a boolean grid from an `.lmt` file.
    File(PathBuf),
    /// Rasterize an analytic shape, identical in every frame.
    Synth(MaskShape),
}

impl MaskSource {
    /// Materializes the mask at the run's shape, validating file-loaded
    /// grids against it.
    pub fn resolve(&self, n_frames: usize, height: usize, width: usize) -> Result<BoolGrid> {
        match self {
            MaskSource::None => Ok(BoolGrid::filled(n_frames, height, width, false)),
            MaskSource::Synth(shape) => synth_mask(*shape, n_frames, height, width),
            MaskSource::File(path) => {
                let mask = read_mask_lmt(path)?;
                if mask.shape() != (n_frames, height, width) {
                    return Err(Error::Shape {
                        expected: format!("{n_frames}x{height}x{width}"),
                        actual: format!(
                            "{}x{}x{}",
                            mask.n_frames(),
                            mask.height(),
                            mask.width()
                        ),
                    });
                }
                Ok(mask)
            }
        }
    }
}

/// Everything a run needs besides the denoiser itself.
///
/// `ddim_steps`, `update_index`, `stop_index` and `renoise_index` are DDIM
/// indices satisfying `ddim_steps >= renoise_index >= update_index >
/// stop_index >= 1` (the renoise bound only applies when correction is
/// enabled).
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub ddim_steps: usize,
    pub update_index: usize,
    pub stop_index: usize,
    pub renoise_index: usize,
    pub seed: u64,
    pub camera: CameraParams,
    pub correction_enabled: bool,
    pub mask_source: MaskSource,
    pub axis_policy: AxisPolicy,
    pub n_frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl PipelineConfig {
    /// Standard run: 50 DDIM steps, update halfway down, renoise to 70%.
    pub fn with_defaults(camera: CameraParams, seed: u64) -> Self {
        PipelineConfig {
            ddim_steps: 50,
            update_index: 25,
            stop_index: 1,
            renoise_index: 35,
            seed,
            camera,
            correction_enabled: true,
            mask_source: MaskSource::None,
            axis_policy: AxisPolicy::Auto,
            n_frames: 16,
            channels: 4,
            height: 64,
            width: 64,
        }
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n_frames, self.channels, self.height, self.width)
    }

    /// Checks every structural invariant. `run` calls this before touching
    /// any latent data, so a bad config never costs compute.
    pub fn validate(&self) -> Result<()> {
        let fail = |detail: String| Err(Error::Config { detail });
        if self.n_frames == 0 || self.channels == 0 || self.height == 0 || self.width == 0 {
            return fail(format!(
                "shape {}x{}x{}x{} has a zero dimension",
                self.n_frames, self.channels, self.height, self.width
            ));
        }
        if self.ddim_steps == 0 {
            return fail("ddim_steps must be at least 1".to_string());
        }
        if self.ddim_steps > 1000 {
            return fail(format!(
                "ddim_steps ({}) exceeds the 1000-step training schedule",
                self.ddim_steps
            ));
        }
        if self.stop_index == 0 {
            return fail("stop_index must be at least 1".to_string());
        }
        if self.update_index <= self.stop_index {
            return fail(format!(
                "update_index ({}) must exceed stop_index ({})",
                self.update_index, self.stop_index
            ));
        }
        if self.ddim_steps < self.update_index {
            return fail(format!(
                "update_index ({}) exceeds ddim_steps ({})",
                self.update_index, self.ddim_steps
            ));
        }
        if self.correction_enabled {
            if self.renoise_index < self.update_index {
                return fail(format!(
                    "renoise_index ({}) must be at least update_index ({})",
                    self.renoise_index, self.update_index
                ));
            }
            if self.ddim_steps < self.renoise_index {
                return fail(format!(
                    "renoise_index ({}) exceeds ddim_steps ({})",
                    self.renoise_index, self.ddim_steps
                ));
            }
        }
        if let Err(e) = self.camera.validate() {
            return fail(format!("camera: {e}"));
        }
        Ok(())
    }
}

/// Predicted-noise variance at one executed DDIM step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarEntry {
    pub ddim_index: usize,
    pub t_train: usize,
    pub variance: f64,
}

/// Every intermediate a run produces, in execution order: the snapshots
/// around the update and renoise boundaries, the per-step noise variances,
/// and the fill provenance for the exposed region.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub z_init: LatentVideo,
    pub z_pre_update: LatentVideo,
    pub z_post_update: LatentVideo,
    pub z_pre_renoise: LatentVideo,
    pub z_post_renoise: Option<LatentVideo>,
    pub z_final: LatentVideo,
    pub renoise_eps: Option<LatentVideo>,
    pub variances: Vec<VarEntry>,
    pub provenance: SampleProvenance,
    pub omega: BoolGrid,
}

/// Moves a latent back up the schedule: `sqrt(abar_t) * z +
/// sqrt(1 - abar_t) * eps` with fresh seeded noise. Returns the result and
/// the noise actually drawn.
pub fn renoise(
    z: &LatentVideo,
    t: usize,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<(LatentVideo, LatentVideo)> {
    let (n, c, h, w) = z.shape();
    let mut noise = vec![0.0f32; n * c * h * w];
    CounterRng::new(seed, &[STREAM_RENOISE]).fill_normal_f32(&mut noise);
    let eps = LatentVideo::new(n, c, h, w, noise)?;
    let out = schedule.forward_noise(z, t, &eps)?;
    Ok((out, eps))
}

fn denoise_leg<D: Denoiser + ?Sized>(
    z: &mut LatentVideo,
    from_index: usize,
    to_index: usize,
    schedule: &NoiseSchedule,
    denoiser: &D,
    variances: &mut Vec<VarEntry>,
) -> Result<()> {
    for k in ((to_index + 1)..=from_index).rev() {
        let t = schedule.train_timestep(k);
        let t_prev = schedule.train_timestep(k - 1);
        let eps = denoiser.predict_eps(z, t)?;
        if !eps.same_shape(z) {
            return Err(Error::Shape {
                expected: z.shape_string(),
                actual: eps.shape_string(),
            });
        }
        variances.push(VarEntry {
            ddim_index: k,
            t_train: t,
            variance: eps.population_variance(),
        });
        *z = schedule.ddim_step(z, &eps, t, t_prev)?;
    }
    Ok(())
}

/// Confirms the fill stage touched exactly the exposed region: every mask
/// pixel has a provenance record and nothing else does.
fn audit_fill(omega: &BoolGrid, provenance: &SampleProvenance) -> Result<()> {
    if provenance.len() != omega.count_true() {
        return Err(Error::Numeric {
            context: format!(
                "fill audit: {} provenance records for {} exposed pixels",
                provenance.len(),
                omega.count_true()
            ),
        });
    }
    for rec in provenance.records() {
        if !omega.get(rec.frame, rec.row, rec.col) {
            return Err(Error::Numeric {
                context: format!(
                    "fill audit: record outside the exposed region at frame {}, row {}, col {}",
                    rec.frame, rec.row, rec.col
                ),
            });
        }
    }
    Ok(())
}

/// Executes a full run and returns its trace.
///
/// Failures carry the stage they happened in: `camera`, `mask`, `denoise`,
/// `permute`, `resample`, or `renoise`. Config violations are reported
/// unwrapped, before any compute.
pub fn run<D: Denoiser + ?Sized>(config: &PipelineConfig, denoiser: &D) -> Result<RunTrace> {
    run_with_initial(config, denoiser, None)
}

/// Like [`run`], but starting from a caller-supplied initial latent instead
/// of the seeded draw; the latent must match the configured shape.
pub fn run_with_initial<D: Denoiser + ?Sized>(
    config: &PipelineConfig,
    denoiser: &D,
    initial: Option<&LatentVideo>,
) -> Result<RunTrace> {
    config.validate()?;
    let (n, c, h, w) = config.shape();
    let schedule = NoiseSchedule::default_linear(config.ddim_steps)
        .map_err(|e| e.in_stage("denoise"))?;
    let field = build_motion_field(&config.camera, n, h, w).map_err(|e| e.in_stage("camera"))?;
    let mask = config
        .mask_source
        .resolve(n, h, w)
        .map_err(|e| e.in_stage("mask"))?;

    let z_init = match initial {
        Some(z) if z.shape() != (n, c, h, w) => {
            return Err(Error::Shape {
                expected: format!("{n}x{c}x{h}x{w}"),
                actual: z.shape_string(),
            });
        }
        Some(z) => z.clone(),
        None => {
            let mut noise = vec![0.0f32; n * c * h * w];
            CounterRng::new(config.seed, &[STREAM_INIT_NOISE]).fill_normal_f32(&mut noise);
            LatentVideo::new(n, c, h, w, noise)?
        }
    };

    let mut variances = Vec::new();
    let mut z = z_init.clone();
    denoise_leg(
        &mut z,
        config.ddim_steps,
        config.update_index,
        &schedule,
        denoiser,
        &mut variances,
    )
    .map_err(|e| e.in_stage("denoise"))?;
    let z_pre_update = z.clone();

    let (permuted, omega) = apply_permutation(&z, &field).map_err(|e| e.in_stage("permute"))?;
    let (filled, provenance) = resample_all(
        &permuted,
        &omega,
        &mask,
        &field,
        config.axis_policy,
        config.seed,
    )
    .map_err(|e| e.in_stage("resample"))?;
    audit_fill(&omega, &provenance).map_err(|e| e.in_stage("resample"))?;
    z = filled;
    let z_post_update = z.clone();

    denoise_leg(
        &mut z,
        config.update_index,
        config.stop_index,
        &schedule,
        denoiser,
        &mut variances,
    )
    .map_err(|e| e.in_stage("denoise"))?;
    let z_pre_renoise = z.clone();

    let (z_post_renoise, renoise_eps, z_final) = if config.correction_enabled {
        let t_renoise = schedule.train_timestep(config.renoise_index);
        let (renoised, eps) =
            renoise(&z, t_renoise, &schedule, config.seed).map_err(|e| e.in_stage("renoise"))?;
        z = renoised.clone();
        denoise_leg(
            &mut z,
            config.renoise_index,
            1,
            &schedule,
            denoiser,
            &mut variances,
        )
        .map_err(|e| e.in_stage("denoise"))?;
        (Some(renoised), Some(eps), z)
    } else {
        denoise_leg(
            &mut z,
            config.stop_index,
            1,
            &schedule,
            denoiser,
            &mut variances,
        )
        .map_err(|e| e.in_stage("denoise"))?;
        (None, None, z)
    };

    Ok(RunTrace {
        z_init,
        z_pre_update,
        z_post_update,
        z_pre_renoise,
        z_post_renoise,
        z_final,
        renoise_eps,
        variances,
        provenance,
        omega,
    })
}
