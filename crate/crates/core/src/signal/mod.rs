//! Spectral math over tumbling epochs.
//!
//! Everything here is 64-bit floating point and deterministic: the same
//! samples and configuration always give bit-identical spectra.

mod config;
mod epoch;
mod spectrum;

pub use config::{EpochConfig, WindowFn};
pub use epoch::{remove_dc, Epoch, EpochAssembler, Sample, StreamError};
pub use spectrum::{
    band_power, dft, idft, periodogram, BandPower, SignalError, SpectralEstimator, Spectrum,
};
