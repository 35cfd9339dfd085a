//! Synthetic linear datasets in the unit square.

use crate::error::{DpError, Result};
use crate::noise::{NoiseSource, RandomStream};
use crate::simplex::Record;

/// Stream index reserved for the shared dataset of a setup.
pub const DATA_STREAM: u64 = u64::MAX;

/// Stream index for the fresh dataset of Monte Carlo iteration `i`.
pub fn fresh_data_stream(iteration: u64) -> u64 {
    DATA_STREAM - 1 - iteration
}

/// `y = alpha·x + beta + N(0, sigma²)` with `x ~ U[0, 1]`, `y` clipped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetupConfig {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl SetupConfig {
    /// n = 5000, α = −0.7, β = 0.8, σ = 0.05.
    pub fn setup1(seed: u64) -> Self {
        SetupConfig {
            n: 5_000,
            alpha: -0.7,
            beta: 0.8,
            sigma: 0.05,
            seed,
        }
    }

    /// n = 10000, α = 0.5, β = 0.2, σ = 0.1.
    pub fn setup2(seed: u64) -> Self {
        SetupConfig {
            n: 10_000,
            alpha: 0.5,
            beta: 0.2,
            sigma: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(DpError::config("n", "must be positive"));
        }
        if !self.alpha.is_finite() {
            return Err(DpError::config("alpha", "must be finite"));
        }
        if !self.beta.is_finite() {
            return Err(DpError::config("beta", "must be finite"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(DpError::config("sigma", "must be non-negative"));
        }
        Ok(())
    }

    pub fn true_line(&self) -> (f64, f64) {
        (self.alpha, self.beta)
    }
}

/// Box–Muller normal sampler that caches the second variate of each pair.
struct Gaussian {
    spare: Option<f64>,
}

impl Gaussian {
    fn sample<N: NoiseSource + ?Sized>(&mut self, noise: &mut N) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = noise.uniform();
        let u2 = noise.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// The setup's dataset, drawn from its reserved data stream.
pub fn generate_setup(cfg: &SetupConfig) -> Vec<Record> {
    generate_from_stream(cfg, DATA_STREAM)
}

/// Dataset drawn from an explicit substream of the setup seed.
pub fn generate_from_stream(cfg: &SetupConfig, stream_index: u64) -> Vec<Record> {
    let mut stream = RandomStream::new(cfg.seed, stream_index);
    let mut gauss = Gaussian { spare: None };
    (0..cfg.n)
        .map(|_| {
            let x = stream.uniform();
            let e = gauss.sample(&mut stream);
            let y = (cfg.alpha * x + cfg.beta + cfg.sigma * e).clamp(0.0, 1.0);
            Record::new(x, y).expect("x in (0, 1), y clamped")
        })
        .collect()
}
