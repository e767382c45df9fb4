//! Periodic stationary Gaussian random fields on the unit interval.
//!
//! The covariance `k(x, x') = sigma^2 exp(-(1 - cos(2 pi (x - x'))) / l^2)` is
//! circulant on a uniform periodic grid, so the DFT diagonalizes it and a sample
//! costs one FFT.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::rng::rng_from;

/// Consecutive rejections tolerated before the clip bound is deemed too tight.
pub const MAX_REJECTIONS: usize = 1000;
/// Most negative covariance eigenvalue tolerated (and clamped to zero).
pub const EIGEN_TOLERANCE: f64 = -1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrfConfig {
    pub sigma: f64,
    pub ell: f64,
    pub n: usize,
    /// Reject samples with any `|value| > clip`; `None` disables rejection.
    pub clip: Option<f64>,
}

impl Default for GrfConfig {
    fn default() -> Self {
        GrfConfig {
            sigma: 1.0,
            ell: 1.0,
            n: 100,
            clip: Some(3.0),
        }
    }
}

impl GrfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.ell > 0.0 && self.n > 0) {
            return Err(Error::Config(format!(
                "GRF needs positive sigma, length scale and grid size: {self:?}"
            )));
        }
        if let Some(b) = self.clip {
            if !(b > 0.0) {
                return Err(Error::Config(format!(
                    "GRF clip bound must be positive, got {b}"
                )));
            }
        }
        Ok(())
    }
}

pub fn periodic_kernel(x: f64, xp: f64, cfg: &GrfConfig) -> f64 {
    let lag = 2.0 * std::f64::consts::PI * (x - xp);
    cfg.sigma * cfg.sigma * (-(1.0 - lag.cos()) / (cfg.ell * cfg.ell)).exp()
}

/// Reusable sampler holding the square-rooted circulant spectrum.
pub struct GrfSampler {
    cfg: GrfConfig,
    amplitudes: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for GrfSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrfSampler")
            .field("cfg", &self.cfg)
            .finish()
    }
}

impl GrfSampler {
    pub fn new(cfg: GrfConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n;
        let dx = 1.0 / n as f64;
        let mut spectrum: Vec<Complex64> = (0..n)
            .map(|m| Complex64::new(periodic_kernel(m as f64 * dx, 0.0, &cfg), 0.0))
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        fft.process(&mut spectrum);
        let mut amplitudes = Vec::with_capacity(n);
        for (k, lambda) in spectrum.iter().enumerate() {
            let ev = lambda.re;
            if ev < EIGEN_TOLERANCE {
                return Err(Error::Numeric {
                    index: k,
                    context: format!("circulant covariance eigenvalue {ev:e} is negative"),
                });
            }
            amplitudes.push((ev.max(0.0) / n as f64).sqrt());
        }
        Ok(GrfSampler {
            cfg,
            amplitudes,
            fft,
        })
    }

    pub fn config(&self) -> &GrfConfig {
        &self.cfg
    }

    /// One unclipped draw using `rng`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut buf: Vec<Complex64> = self
            .amplitudes
            .iter()
            .map(|&a| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(a * re, a * im)
            })
            .collect();
        self.fft.process(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Deterministic sample for `seed`, redrawn until it respects the clip bound.
    pub fn sample(&self, seed: u64) -> Result<GridFunction> {
        let mut rng = rng_from(seed);
        for _ in 0..MAX_REJECTIONS {
            let values = self.draw(&mut rng);
            let accepted = match self.cfg.clip {
                Some(b) => values.iter().all(|v| v.abs() <= b),
                None => true,
            };
            if accepted {
                return GridFunction::new(values);
            }
        }
        Err(Error::Config(format!(
            "{MAX_REJECTIONS} consecutive GRF samples exceeded the clip bound {:?} (sigma {})",
            self.cfg.clip, self.cfg.sigma
        )))
    }
}

pub fn sample(cfg: &GrfConfig, seed: u64) -> Result<GridFunction> {
    GrfSampler::new(cfg.clone())?.sample(seed)
}
