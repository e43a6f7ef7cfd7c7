//! DFT, one-sided periodogram and band-power cumulation.
//!
//! The periodogram of a length-`n` epoch sampled at `fs` is
//!
//! ```text
//! psd[k] = c_k · |X[k]|² / (fs · n · W)      k = 0 ..= n/2
//! ```
//!
//! with `c_k = 1` at DC and Nyquist, `2` elsewhere, and `W` the mean squared
//! window coefficient. With this scaling `Σ psd[k]·Δf` equals the mean square
//! of the (DC-removed, windowed, window-compensated) epoch.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::epoch::{subtract_mean, Epoch};
use super::{EpochConfig, WindowFn};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SignalError {
    #[error("band {lo_hz}:{hi_hz} Hz lies outside [0, {nyquist_hz}] or is empty")]
    BandOutOfRange {
        lo_hz: f64,
        hi_hz: f64,
        nyquist_hz: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// DFT length.
    pub n: usize,
    pub sample_rate_hz: f64,
    /// One-sided PSD in µV²/Hz, `n/2 + 1` bins.
    pub psd: Vec<f64>,
}

impl Spectrum {
    /// Bin spacing `fs / n` in Hz.
    pub fn resolution_hz(&self) -> f64 {
        self.sample_rate_hz / self.n as f64
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate_hz / self.n as f64
    }

    /// Σ psd·Δf over every bin, in µV².
    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.resolution_hz()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPower {
    pub lo_hz: f64,
    pub hi_hz: f64,
    /// µV².
    pub power: f64,
}

/// Forward DFT, `X[k] = Σ x[j]·exp(−2πi·jk/n)`.
pub fn dft(samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    if buf.is_empty() {
        return buf;
    }
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Inverse DFT including the `1/n` normalization.
pub fn idft(spectrum: &[Complex64]) -> Vec<Complex64> {
    let mut buf = spectrum.to_vec();
    if buf.is_empty() {
        return buf;
    }
    let n = buf.len() as f64;
    FftPlanner::new().plan_fft_inverse(buf.len()).process(&mut buf);
    buf.iter_mut().for_each(|c| *c /= n);
    buf
}

/// One-sided periodogram of an epoch. DC is always removed first.
pub fn periodogram(epoch: &Epoch, cfg: &EpochConfig) -> Spectrum {
    SpectralEstimator::new(epoch.samples.len(), cfg.sample_rate_hz as f64, cfg.window_fn)
        .estimate(&epoch.samples)
}

/// Sums `psd·Δf` over every bin whose centre lies in `[lo_hz, hi_hz]`, both
/// edges inclusive. For 256 Hz and 1280-point epochs the 4–8 Hz band is
/// bins 20 through 40.
pub fn band_power(spec: &Spectrum, lo_hz: f64, hi_hz: f64) -> Result<BandPower, SignalError> {
    let nyquist_hz = spec.sample_rate_hz / 2.0;
    if !(lo_hz.is_finite() && hi_hz.is_finite()) || lo_hz < 0.0 || lo_hz >= hi_hz || hi_hz > nyquist_hz
    {
        return Err(SignalError::BandOutOfRange {
            lo_hz,
            hi_hz,
            nyquist_hz,
        });
    }
    let (first, last) = band_bins(spec.n, spec.sample_rate_hz, lo_hz, hi_hz);
    let last = last.min(spec.psd.len().saturating_sub(1));
    let power = if first > last {
        0.0
    } else {
        spec.psd[first..=last].iter().sum::<f64>() * spec.resolution_hz()
    };
    Ok(BandPower {
        lo_hz,
        hi_hz,
        power,
    })
}

/// Inclusive bin range for a band; a bin centre within 1e-9 bins of an edge
/// counts as on the edge.
fn band_bins(n: usize, fs: f64, lo_hz: f64, hi_hz: f64) -> (usize, usize) {
    let scale = n as f64 / fs;
    let first = (lo_hz * scale - 1e-9).ceil().max(0.0) as usize;
    let last = (hi_hz * scale + 1e-9).floor().max(0.0) as usize;
    (first, last)
}

/// Reusable periodogram state for a fixed epoch length: the FFT plan, window
/// coefficients and work buffers. Produces bit-identical output to
/// [`periodogram`].
pub struct SpectralEstimator {
    n: usize,
    sample_rate_hz: f64,
    window: Vec<f64>,
    window_power: f64,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
    centred: Vec<f64>,
}

impl std::fmt::Debug for SpectralEstimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralEstimator")
            .field("n", &self.n)
            .field("sample_rate_hz", &self.sample_rate_hz)
            .field("window_power", &self.window_power)
            .finish()
    }
}

impl SpectralEstimator {
    pub fn new(n: usize, sample_rate_hz: f64, window_fn: WindowFn) -> Self {
        let window = window_fn.coefficients(n);
        let window_power = window.iter().map(|w| w * w).sum::<f64>() / n.max(1) as f64;
        let fft = FftPlanner::new().plan_fft_forward(n);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Self {
            n,
            sample_rate_hz,
            window,
            window_power,
            fft,
            buf: vec![Complex64::default(); n],
            scratch,
            centred: vec![0.0; n],
        }
    }

    pub fn for_config(cfg: &EpochConfig) -> Self {
        Self::new(cfg.samples_per_epoch(), cfg.sample_rate_hz as f64, cfg.window_fn)
    }

    pub fn estimate(&mut self, samples: &[f64]) -> Spectrum {
        assert_eq!(samples.len(), self.n, "epoch length does not match estimator");
        let n = self.n;
        self.centred.copy_from_slice(samples);
        subtract_mean(&mut self.centred);
        for ((slot, &x), &w) in self.buf.iter_mut().zip(&self.centred).zip(&self.window) {
            *slot = Complex64::new(x * w, 0.0);
        }
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);

        let norm = self.sample_rate_hz * n as f64 * self.window_power;
        let bins = n / 2 + 1;
        let psd = (0..bins)
            .map(|k| {
                let edge = k == 0 || (n.is_multiple_of(2) && k == n / 2);
                let fold = if edge { 1.0 } else { 2.0 };
                if norm == 0.0 {
                    0.0
                } else {
                    fold * self.buf[k].norm_sqr() / norm
                }
            })
            .collect();
        Spectrum {
            n,
            sample_rate_hz: self.sample_rate_hz,
            psd,
        }
    }

    /// Theta (or configured band) power of one epoch.
    pub fn band_power(&mut self, samples: &[f64], lo_hz: f64, hi_hz: f64) -> Result<BandPower, SignalError> {
        let spec = self.estimate(samples);
        band_power(&spec, lo_hz, hi_hz)
    }
}
