//! Vigilance detection from a single frontal EEG channel.
//!
//! The pipeline frames a sample stream into tumbling epochs, estimates each
//! epoch's one-sided periodogram, sums the theta band (4–8 Hz by default),
//! calibrates a per-person threshold from an eyes-closed baseline and then
//! classifies every following epoch as vigilant or non-vigilant.
//!
//! Modules:
//! - [`signal`]: epoch assembly, DFT, periodogram and band power.
//! - [`engine`]: baseline calibration, classification and the session phase machine.
//! - [`ingest`]: CSV replay, seeded synthetic EEG and a line-oriented network source.
//! - [`eval`]: labeling against eye-status tags, accuracy, confusion matrices,
//!   summary statistics and the paired t-test.
//! - [`pipeline`] and [`event`]: the sample-to-event transducer shared by the
//!   offline analyzer and the live service.
//! - [`record`]: the append-only session record file.

pub mod engine;
pub mod eval;
pub mod event;
pub mod ingest;
pub mod pipeline;
pub mod record;
pub mod signal;

pub use engine::{
    calibrate, classify, BaselineProfile, CalibrationConfig, EngineError, EpochMeasurement,
    EpochVerdict, SessionMachine, SessionPhase, VigilanceState,
};
pub use eval::{EyeStatus, EyeStatusTag, SessionMode};
pub use event::SessionEvent;
pub use pipeline::Pipeline;
pub use signal::{EpochConfig, Sample, WindowFn};

use thiserror::Error;

/// A configuration value violated its invariant. `field` names the offending
/// setting so that callers (HTTP, CLI) can point at it.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid `{field}`: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}
