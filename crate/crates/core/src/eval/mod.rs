//! Scoring predicted vigilance against tagged eye status.
//!
//! Ground truth correspondence: eyes open ↔ vigilant, eyes closed ↔
//! non-vigilant.

mod labels;
mod metrics;
mod report;
mod stats;

pub use labels::{label_epochs, LabeledEpoch};
pub use metrics::{accuracy, confusion, session_report, ConfusionMatrix, SessionReport};
pub use report::{format_percent, render_report, RenderedReport};
pub use stats::{
    ln_gamma, mean, paired_t_test, regularized_incomplete_beta, sample_std, student_t_two_tailed,
    summarize, Summary, TTestResult,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::VigilanceState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EyeStatus {
    Open,
    Closed,
}

impl EyeStatus {
    /// The vigilance state that counts as a correct prediction for this status.
    pub fn expected_state(self) -> VigilanceState {
        match self {
            EyeStatus::Open => VigilanceState::Vigilant,
            EyeStatus::Closed => VigilanceState::NonVigilant,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EyeStatus::Open => "open",
            EyeStatus::Closed => "closed",
        }
    }
}

impl std::str::FromStr for EyeStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(EyeStatus::Open),
            "closed" => Ok(EyeStatus::Closed),
            other => Err(format!("unknown eye status `{other}` (expected open|closed)")),
        }
    }
}

/// Eye status observed from time `t` (sample clock, seconds) onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EyeStatusTag {
    pub t: f64,
    pub status: EyeStatus,
}

/// How the eye-status ground truth was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionMode {
    /// Timed open/close prompts, tagged automatically.
    #[default]
    Instructed,
    /// Free behaviour tagged by an observer.
    Natural,
}

impl SessionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionMode::Instructed => "instructed",
            SessionMode::Natural => "natural",
        }
    }
}

impl std::str::FromStr for SessionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "instructed" => Ok(SessionMode::Instructed),
            "natural" => Ok(SessionMode::Natural),
            other => Err(format!("unknown mode `{other}` (expected instructed|natural)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no eye-status tag at or before t={epoch_start} (first monitored epoch)")]
    NoTagBeforeEpoch { epoch_start: f64 },
    #[error("eye-status tags are not strictly increasing at t={t}")]
    TagsNotIncreasing { t: f64 },
    #[error("{0} needs a non-empty input")]
    Empty(&'static str),
    #[error("sample standard deviation needs at least 2 values, got {0}")]
    TooFewForStd(usize),
    #[error("paired samples differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
    #[error("paired t-test needs at least 2 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("paired differences have zero variance (mean difference {mean_diff})")]
    Degenerate { mean_diff: f64 },
}
