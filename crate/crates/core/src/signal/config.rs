use serde::{Deserialize, Serialize};

use crate::ConfigError;

/// Taper applied to an epoch before the DFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFn {
    #[default]
    #[serde(alias = "rect")]
    Rectangular,
    Hann,
}

impl WindowFn {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            WindowFn::Rectangular => vec![1.0; n],
            WindowFn::Hann => (0..n)
                .map(|j| {
                    let phase = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                    0.5 * (1.0 - phase.cos())
                })
                .collect(),
        }
    }
}

/// Epoch framing and band selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpochConfig {
    pub sample_rate_hz: u32,
    /// Epoch length in whole seconds, 2 through 10.
    pub epoch_seconds: u32,
    pub window_fn: WindowFn,
    pub band_lo_hz: f64,
    pub band_hi_hz: f64,
}

impl Default for EpochConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 256,
            epoch_seconds: 5,
            window_fn: WindowFn::Rectangular,
            band_lo_hz: 4.0,
            band_hi_hz: 8.0,
        }
    }
}

impl EpochConfig {
    pub const MIN_EPOCH_SECONDS: u32 = 2;
    pub const MAX_EPOCH_SECONDS: u32 = 10;

    pub fn samples_per_epoch(&self) -> usize {
        self.sample_rate_hz as usize * self.epoch_seconds as usize
    }

    pub fn nyquist_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / 2.0
    }

    /// Start time of epoch `index`, in seconds since session start.
    pub fn epoch_start(&self, index: usize) -> f64 {
        index as f64 * self.epoch_seconds as f64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sample_rate_hz == 0 {
            return Err(ConfigError::new("sample_rate_hz", "must be positive"));
        }
        if !(Self::MIN_EPOCH_SECONDS..=Self::MAX_EPOCH_SECONDS).contains(&self.epoch_seconds) {
            return Err(ConfigError::new(
                "epoch_seconds",
                format!(
                    "{} is outside the supported {}-{} s window range",
                    self.epoch_seconds,
                    Self::MIN_EPOCH_SECONDS,
                    Self::MAX_EPOCH_SECONDS
                ),
            ));
        }
        if self.samples_per_epoch() < 2 {
            return Err(ConfigError::new("epoch_seconds", "epoch must hold at least 2 samples"));
        }
        let (lo, hi) = (self.band_lo_hz, self.band_hi_hz);
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo >= hi || hi > self.nyquist_hz() {
            return Err(ConfigError::new(
                "band",
                format!(
                    "need 0 <= lo < hi <= {} Hz, got {lo}:{hi}",
                    self.nyquist_hz()
                ),
            ));
        }
        Ok(())
    }
}
