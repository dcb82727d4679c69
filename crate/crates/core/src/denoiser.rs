//! The noise-prediction contract and analytic test denoisers.
//!
//! No neural network lives in this crate. The [`OracleDenoiser`] knows the
//! ground-truth clean latent and inverts the forward noising formula
//! exactly, which makes whole-pipeline behavior provable: feeding its
//! prediction to the deterministic step always reconstructs the clean
//! latent it was built with. The [`PerturbedOracle`] wraps it with a
//! multiplicative bias and seeded jitter to stress variance diagnostics.

use crate::error::{Error, Result};
use crate::rng::{normal_at, STREAM_JITTER};
use crate::schedule::NoiseSchedule;
use crate::tensorio::LatentVideo;

/// Noise predictor: estimates the noise component of a latent at a given
/// training timestep. Implementations must be shape-preserving, return
/// finite values, and be pure functions of `(z_t, t)` plus construction
/// state.
pub trait Denoiser {
    fn predict_eps(&self, z_t: &LatentVideo, t: usize) -> Result<LatentVideo>;
}

/// Exact noise predictor for a known clean latent:
/// `(z_t - sqrt(abar_t) * x0) / sqrt(1 - abar_t)` elementwise.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    x0: LatentVideo,
    schedule: NoiseSchedule,
}

impl OracleDenoiser {
    pub fn new(x0: LatentVideo, schedule: NoiseSchedule) -> Self {
        OracleDenoiser { x0, schedule }
    }

    /// The clean latent this oracle reconstructs.
    pub fn x0(&self) -> &LatentVideo {
        &self.x0
    }
}

impl Denoiser for OracleDenoiser {
    fn predict_eps(&self, z_t: &LatentVideo, t: usize) -> Result<LatentVideo> {
        if !z_t.same_shape(&self.x0) {
            return Err(Error::Shape {
                expected: self.x0.shape_string(),
                actual: z_t.shape_string(),
            });
        }
        if t < 1 || t > self.schedule.n_train_steps() {
            return Err(Error::Parameter {
                field: "t",
                reason: format!("timestep {t} out of range 1..={}", self.schedule.n_train_steps()),
            });
        }
        let ab = self.schedule.alpha_bar(t);
        if ab >= 1.0 {
            return Err(Error::UnitAlphaBar { t });
        }
        let signal = ab.sqrt();
        let inv_noise = 1.0 / (1.0 - ab).sqrt();
        let (n, c, h, w) = z_t.shape();
        let data: Vec<f32> = z_t
            .data()
            .iter()
            .zip(self.x0.data())
            .map(|(&z, &x)| ((z as f64 - signal * x as f64) * inv_noise) as f32)
            .collect();
        LatentVideo::new(n, c, h, w, data)
    }
}

/// Oracle wrapper that scales predictions by `1 + bias` and adds seeded
/// Gaussian jitter. Jitter is a pure function of `(seed, t, element)`.
#[derive(Debug, Clone)]
pub struct PerturbedOracle {
    inner: OracleDenoiser,
    bias: f64,
    jitter_std: f64,
    seed: u64,
}

impl PerturbedOracle {
    pub fn new(inner: OracleDenoiser, bias: f64, jitter_std: f64, seed: u64) -> Self {
        PerturbedOracle {
            inner,
            bias,
            jitter_std,
            seed,
        }
    }
}

impl Denoiser for PerturbedOracle {
    fn predict_eps(&self, z_t: &LatentVideo, t: usize) -> Result<LatentVideo> {
        let base = self.inner.predict_eps(z_t, t)?;
        let gain = 1.0 + self.bias;
        let (n, c, h, w) = base.shape();
        let data: Vec<f32> = base
            .data()
            .iter()
            .enumerate()
            .map(|(idx, &e)| {
                let jitter = if self.jitter_std == 0.0 {
                    0.0
                } else {
                    self.jitter_std * normal_at(self.seed, &[STREAM_JITTER, t as u64, idx as u64])
                };
                (gain * e as f64 + jitter) as f32
            })
            .collect();
        LatentVideo::new(n, c, h, w, data)
    }
}
