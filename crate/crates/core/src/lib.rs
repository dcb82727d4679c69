//! Tuning-free camera motion for latent video diffusion.
//!
//! The crate implements one idea end to end: a partially denoised latent
//! video can be panned, zoomed, or rotated by permuting its pixels along
//! per-frame coordinate maps, the region exposed at the trailing edge can
//! be refilled by resampling background content, and a single renoise step
//! afterwards lets the remaining denoising steps blend the seams. Every
//! stage is deterministic given a seed, and every statistical claim the
//! design rests on is measurable through the probes in [`diagnostics`].
//!
//! The pieces compose in pipeline order:
//!
//! * [`schedule`]: the training noise table and the deterministic sampler
//!   step.
//! * [`camera`]: per-frame coordinate maps and the dense motion field.
//! * [`permute`], [`resample`]: applying the field to a latent and filling
//!   the exposed region with provenance records.
//! * [`attnmask`]: foreground masks that protect moving subjects from
//!   being sampled as background.
//! * [`denoiser`], [`pipeline`]: the noise-prediction contract, analytic
//!   oracles, and the full run.
//! * [`diagnostics`]: variance traces and correlation probes.
//! * [`tensorio`], [`rng`]: the `.lmt` tensor format, CSV export, and
//!   counter-based random streams.

pub mod attnmask;
pub mod camera;
pub mod denoiser;
pub mod diagnostics;
pub mod error;
pub mod permute;
pub mod pipeline;
pub mod resample;
pub mod rng;
pub mod schedule;
pub mod tensorio;

pub use attnmask::{
    attention_from_latent, binarize_refine, read_attention_lmt, synth_mask, AttentionMap,
    ForegroundMask, MaskShape,
};
pub use camera::{
    build_motion_field, preset, Axis, CameraParams, MotionField, RotationRamp, DEFAULT_FOCAL,
    PRESET_NAMES,
};
pub use denoiser::{Denoiser, OracleDenoiser, PerturbedOracle};
pub use diagnostics::{
    pearson, population_variance, predicted_noise_variance, snr_mismatch_probe,
    update_shift_probe, UpdateShiftReport, VarTracePoint, VarianceTrace,
};
pub use error::{Error, Result};
pub use permute::apply_permutation;
pub use pipeline::{renoise, run, run_with_initial, MaskSource, PipelineConfig, RunTrace, VarEntry};
pub use resample::{
    background_sample, cross_frame_align, resample_all, AxisPolicy, SampleProvenance,
    SampleRecord, SourceKind,
};
pub use rng::CounterRng;
pub use schedule::NoiseSchedule;
pub use tensorio::{
    read_lmt, read_mask_lmt, write_csv, write_lmt, write_mask_lmt, BoolGrid, Cell, LatentVideo,
};
