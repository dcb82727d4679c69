//! Variance and correlation probes for watching a run misbehave.
//!
//! The measurements here exist to make one failure mode visible: after the
//! camera update duplicates background content, the denoiser's noise
//! prediction is no longer independent across duplicated pixels, and after
//! a timestep mismatch its variance is no longer 1. Each probe pairs a
//! Monte-Carlo measurement with the closed-form value it should match, so
//! tests can hold them against each other.

use rayon::prelude::*;

use crate::camera::CameraParams;
use crate::denoiser::{Denoiser, OracleDenoiser};
use crate::error::{Error, Result};
use crate::pipeline::{run, PipelineConfig, VarEntry};
use crate::resample::SourceKind;
use crate::rng::{CounterRng, STREAM_PROBE, STREAM_X0};
use crate::schedule::NoiseSchedule;
use crate::tensorio::{Cell, LatentVideo};

/// Sum with Neumaier compensation: immune to cancellation ordering, so
/// aggregates are reproducible to the last bit regardless of how the work
/// that produced the terms was scheduled.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Population variance (divisor `n`) of a slice, accumulated in `f64` with
/// two compensated passes. Empty input yields 0.
pub fn population_variance(values: &[f32]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().map(|&v| v as f64)) / n;
    let ss = compensated_sum(values.iter().map(|&v| {
        let d = v as f64 - mean;
        d * d
    }));
    (ss / n).max(0.0)
}

/// Pearson correlation of two equal-length observation vectors. Returns 0
/// when either side has no variance or fewer than two points.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "pearson needs paired observations");
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mx = compensated_sum(xs.iter().copied()) / n;
    let my = compensated_sum(ys.iter().copied()) / n;
    let sxx = compensated_sum(xs.iter().map(|&x| (x - mx) * (x - mx)));
    let syy = compensated_sum(ys.iter().map(|&y| (y - my) * (y - my)));
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    let sxy = compensated_sum(xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)));
    sxy / (sxx * syy).sqrt()
}

/// Population variance of the denoiser's prediction at `(z_t, t)`.
pub fn predicted_noise_variance<D: Denoiser + ?Sized>(
    denoiser: &D,
    z_t: &LatentVideo,
    t: usize,
) -> Result<f64> {
    Ok(denoiser.predict_eps(z_t, t)?.population_variance())
}

/// Elements per Monte-Carlo replicate drawn by [`snr_mismatch_probe`]
/// (one 4 x 64 x 64 frame).
pub const PROBE_SAMPLE_ELEMENTS: usize = 4 * 64 * 64;

/// Measures what happens when a latent noised at `t_true` is denoised as if
/// it were at `t_assumed`.
///
/// Draws `n_samples` replicates of [`PROBE_SAMPLE_ELEMENTS`] elements with
/// clean-signal power `x0_power`, noises each at `t_true`, asks the oracle
/// for the noise assuming `t_assumed`, and averages the per-replicate
/// prediction variances. Returns `(measured, expected)` where the expected
/// value is
///
/// ```text
/// ((sqrt(abar_true) - sqrt(abar_assumed))^2 * x0_power + (1 - abar_true))
///   / (1 - abar_assumed)
/// ```
///
/// which is 1 exactly when the timesteps agree.
pub fn snr_mismatch_probe(
    schedule: &NoiseSchedule,
    t_true: usize,
    t_assumed: usize,
    x0_power: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let n_train = schedule.n_train_steps();
    for (field, t) in [("t_true", t_true), ("t_assumed", t_assumed)] {
        if t < 1 || t > n_train {
            return Err(Error::Parameter {
                field,
                reason: format!("timestep {t} out of range 1..={n_train}"),
            });
        }
    }
    if !x0_power.is_finite() || x0_power < 0.0 {
        return Err(Error::Parameter {
            field: "x0_power",
            reason: format!("must be finite and non-negative, got {x0_power}"),
        });
    }
    if n_samples == 0 {
        return Err(Error::Parameter {
            field: "n_samples",
            reason: "at least one sample is required".to_string(),
        });
    }
    let ab_true = schedule.alpha_bar(t_true);
    let ab_assumed = schedule.alpha_bar(t_assumed);
    if ab_assumed >= 1.0 {
        return Err(Error::UnitAlphaBar { t: t_assumed });
    }
    let drift = ab_true.sqrt() - ab_assumed.sqrt();
    let expected = (drift * drift * x0_power + (1.0 - ab_true)) / (1.0 - ab_assumed);

    let scale = x0_power.sqrt();
    let variances: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|s| -> Result<f64> {
            let mut x0_data = vec![0.0f32; PROBE_SAMPLE_ELEMENTS];
            let mut rng = CounterRng::new(seed, &[STREAM_X0, s as u64]);
            for v in &mut x0_data {
                *v = (scale * rng.normal()) as f32;
            }
            let mut eps_data = vec![0.0f32; PROBE_SAMPLE_ELEMENTS];
            CounterRng::new(seed, &[STREAM_PROBE, s as u64]).fill_normal_f32(&mut eps_data);
            let x0 = LatentVideo::new(1, 4, 64, 64, x0_data)?;
            let eps = LatentVideo::new(1, 4, 64, 64, eps_data)?;
            let z = schedule.forward_noise(&x0, t_true, &eps)?;
            let oracle = OracleDenoiser::new(x0, schedule.clone());
            predicted_noise_variance(&oracle, &z, t_assumed)
        })
        .collect::<Result<_>>()?;
    let measured = compensated_sum(variances.iter().copied()) / n_samples as f64;
    Ok((measured, expected))
}

/// Mean predicted-noise variance at one DDIM step, across probe samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarTracePoint {
    pub ddim_index: usize,
    pub t_train: usize,
    pub variance: f64,
    pub n_samples: usize,
}

/// Per-step variance trace averaged over probe samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VarianceTrace {
    points: Vec<VarTracePoint>,
}

impl VarianceTrace {
    pub const CSV_HEADER: [&'static str; 4] = ["step", "t_train", "variance", "n"];

    pub fn points(&self) -> &[VarTracePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_csv_rows(&self) -> Vec<Vec<Cell>> {
        self.points
            .iter()
            .map(|p| {
                vec![
                    Cell::Int(p.ddim_index as i64),
                    Cell::Int(p.t_train as i64),
                    Cell::Real(p.variance),
                    Cell::Int(p.n_samples as i64),
                ]
            })
            .collect()
    }

    /// Averages aligned per-run variance sequences. Every run must have
    /// stepped through the identical index sequence.
    fn from_runs(runs: &[Vec<VarEntry>]) -> Result<VarianceTrace> {
        let first = &runs[0];
        for r in runs {
            let aligned = r.len() == first.len()
                && r.iter()
                    .zip(first)
                    .all(|(a, b)| a.ddim_index == b.ddim_index && a.t_train == b.t_train);
            if !aligned {
                return Err(Error::Numeric {
                    context: "variance traces from probe runs do not align".to_string(),
                });
            }
        }
        let n = runs.len();
        let points = (0..first.len())
            .map(|i| VarTracePoint {
                ddim_index: first[i].ddim_index,
                t_train: first[i].t_train,
                variance: compensated_sum(runs.iter().map(|r| r[i].variance)) / n as f64,
                n_samples: n,
            })
            .collect();
        Ok(VarianceTrace { points })
    }
}

/// What [`update_shift_probe`] measures over its paired runs.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateShiftReport {
    /// Variance trace of runs using the configured camera.
    pub with_update: VarianceTrace,
    /// Variance trace of identity-camera runs from the same seeds.
    pub without_update: VarianceTrace,
    /// Pooled correlation between the predicted noise at each filled pixel
    /// and at its source, right after the update. 0 when nothing was filled.
    pub duplicate_correlation: f64,
    /// Same pooled correlation over the fresh renoise draw; present only
    /// when correction is enabled. Should be near zero by construction.
    pub fresh_correlation: Option<f64>,
    /// Mean number of filled pixels per run.
    pub mean_duplicates: f64,
}

struct ProbeSample {
    with_vars: Vec<VarEntry>,
    without_vars: Vec<VarEntry>,
    dup_xs: Vec<f64>,
    dup_ys: Vec<f64>,
    fresh_xs: Vec<f64>,
    fresh_ys: Vec<f64>,
    n_duplicates: usize,
}

/// Runs the pipeline `n_samples` times with the configured camera and again
/// with the identity camera from identical per-sample seeds, each time
/// against a fresh oracle with its own ground truth. Collects the paired
/// variance traces and the duplicate-pixel noise correlations.
pub fn update_shift_probe(
    config: &PipelineConfig,
    n_samples: usize,
) -> Result<UpdateShiftReport> {
    config.validate()?;
    if n_samples == 0 {
        return Err(Error::Parameter {
            field: "n_samples",
            reason: "at least one sample is required".to_string(),
        });
    }
    let schedule = NoiseSchedule::default_linear(config.ddim_steps)?;
    let t_update = schedule.train_timestep(config.update_index);
    let (n, c, h, w) = config.shape();

    let samples: Vec<ProbeSample> = (0..n_samples)
        .into_par_iter()
        .map(|s| -> Result<ProbeSample> {
            let run_seed = CounterRng::new(config.seed, &[STREAM_PROBE, s as u64]).next_u64();
            let mut x0_data = vec![0.0f32; n * c * h * w];
            CounterRng::new(config.seed, &[STREAM_X0, s as u64]).fill_normal_f32(&mut x0_data);
            let x0 = LatentVideo::new(n, c, h, w, x0_data)?;
            let oracle = OracleDenoiser::new(x0, schedule.clone());

            let mut cfg_with = config.clone();
            cfg_with.seed = run_seed;
            let mut cfg_without = cfg_with.clone();
            cfg_without.camera = CameraParams::identity();

            let with_trace = run(&cfg_with, &oracle)?;
            let without_trace = run(&cfg_without, &oracle)?;

            let eps0 = oracle.predict_eps(&with_trace.z_post_update, t_update)?;
            let records = with_trace.provenance.records();
            let mut dup_xs = Vec::with_capacity(records.len() * c);
            let mut dup_ys = Vec::with_capacity(records.len() * c);
            let mut fresh_xs = Vec::new();
            let mut fresh_ys = Vec::new();
            for rec in records {
                let src_frame = match rec.kind {
                    SourceKind::Reused { donor_frame } => donor_frame,
                    _ => rec.frame,
                };
                for ch in 0..c {
                    dup_xs.push(eps0.get(rec.frame, ch, rec.row, rec.col) as f64);
                    dup_ys.push(eps0.get(src_frame, ch, rec.src_row, rec.src_col) as f64);
                }
            }
            if let Some(fresh) = &with_trace.renoise_eps {
                fresh_xs.reserve(records.len() * c);
                fresh_ys.reserve(records.len() * c);
                for rec in records {
                    let src_frame = match rec.kind {
                        SourceKind::Reused { donor_frame } => donor_frame,
                        _ => rec.frame,
                    };
                    for ch in 0..c {
                        fresh_xs.push(fresh.get(rec.frame, ch, rec.row, rec.col) as f64);
                        fresh_ys.push(fresh.get(src_frame, ch, rec.src_row, rec.src_col) as f64);
                    }
                }
            }
            Ok(ProbeSample {
                with_vars: with_trace.variances,
                without_vars: without_trace.variances,
                dup_xs,
                dup_ys,
                fresh_xs,
                fresh_ys,
                n_duplicates: with_trace.provenance.len(),
            })
        })
        .collect::<Result<_>>()?;

    let with_runs: Vec<Vec<VarEntry>> = samples.iter().map(|s| s.with_vars.clone()).collect();
    let without_runs: Vec<Vec<VarEntry>> =
        samples.iter().map(|s| s.without_vars.clone()).collect();
    let dup_xs: Vec<f64> = samples.iter().flat_map(|s| s.dup_xs.iter().copied()).collect();
    let dup_ys: Vec<f64> = samples.iter().flat_map(|s| s.dup_ys.iter().copied()).collect();
    let fresh_xs: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.fresh_xs.iter().copied())
        .collect();
    let fresh_ys: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.fresh_ys.iter().copied())
        .collect();

    Ok(UpdateShiftReport {
        with_update: VarianceTrace::from_runs(&with_runs)?,
        without_update: VarianceTrace::from_runs(&without_runs)?,
        duplicate_correlation: pearson(&dup_xs, &dup_ys),
        fresh_correlation: config
            .correction_enabled
            .then(|| pearson(&fresh_xs, &fresh_ys)),
        mean_duplicates: compensated_sum(samples.iter().map(|s| s.n_duplicates as f64))
            / n_samples as f64,
    })
}
