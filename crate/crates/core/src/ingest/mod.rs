//! Sample sources: CSV replay, seeded synthetic EEG and a newline-delimited
//! JSON network feed. Every source yields `Result<Sample, IngestError>` with
//! strictly increasing, finite timestamps.

mod csv;
mod net;
mod synth;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use self::csv::{
    read_recording, read_tags, write_recording, write_tags, RecordingWriter, Replay, RECORDING_HEADER,
    TAGS_HEADER,
};
pub use self::net::{listen, NetworkListener, NetworkSource};
pub use self::synth::{
    synthesize, Component, Preset, Segment, SyntheticConfig, Synthesizer, PRESET_NAMES,
};

use crate::signal::Sample;

/// Where a session's samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceSpec {
    /// A recording CSV. `speed` is a real-time multiplier; 0 replays unpaced.
    Replay {
        path: PathBuf,
        #[serde(default)]
        speed: f64,
        /// Optional eye-status tag CSV replayed alongside the samples.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tags: Option<PathBuf>,
    },
    Synthetic {
        config: SyntheticConfig,
        #[serde(default)]
        speed: f64,
    },
    /// Listen for one producer connection speaking the line protocol.
    Network { listen: String },
}

impl SourceSpec {
    pub fn is_live(&self) -> bool {
        matches!(self, SourceSpec::Network { .. })
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamp {t} does not follow {prev}")]
    NonMonotone { line: usize, prev: f64, t: f64 },
    #[error("invalid source configuration: {0}")]
    Config(#[from] crate::ConfigError),
    #[error("cancelled")]
    Cancelled,
}

impl IngestError {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Rejects samples whose time is not strictly after the previous one.
#[derive(Debug, Default, Clone)]
pub(crate) struct MonotoneGuard {
    last: Option<f64>,
}

impl MonotoneGuard {
    pub(crate) fn check(&mut self, sample: &Sample, line: usize) -> Result<(), IngestError> {
        if let Some(prev) = self.last {
            if sample.t <= prev {
                return Err(IngestError::NonMonotone {
                    line,
                    prev,
                    t: sample.t,
                });
            }
        }
        self.last = Some(sample.t);
        Ok(())
    }
}

pub(crate) fn sample_is_sane(sample: &Sample) -> bool {
    sample.t.is_finite() && sample.t >= 0.0 && sample.uv.is_finite()
}
