use serde::{Deserialize, Serialize};

use super::{EvalError, EyeStatus, LabeledEpoch, SessionMode};
use crate::engine::VigilanceState;

/// Fraction of epochs where the prediction agrees with the eye status.
pub fn accuracy(labeled: &[LabeledEpoch]) -> Result<f64, EvalError> {
    if labeled.is_empty() {
        return Err(EvalError::Empty("accuracy"));
    }
    let correct = labeled.iter().filter(|e| e.is_correct()).count();
    Ok(correct as f64 / labeled.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub session_id: String,
    pub mode: SessionMode,
    pub n_epochs: usize,
    pub n_correct: usize,
    pub accuracy: f64,
}

pub fn session_report(
    session_id: impl Into<String>,
    mode: SessionMode,
    labeled: &[LabeledEpoch],
) -> Result<SessionReport, EvalError> {
    let accuracy = accuracy(labeled)?;
    Ok(SessionReport {
        session_id: session_id.into(),
        mode,
        n_epochs: labeled.len(),
        n_correct: labeled.iter().filter(|e| e.is_correct()).count(),
        accuracy,
    })
}

/// Eye-status confusion counts, indexed `[estimated][actual]` with index 0
/// for closed and 1 for open. `normalized` divides each actual-class column
/// by that class's total, so `normalized[OPEN][CLOSED]` is the fraction of
/// eyes-closed epochs estimated as open. A class with no epochs has `None`
/// in its column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 2]; 2],
    pub normalized: [[Option<f64>; 2]; 2],
}

impl ConfusionMatrix {
    pub const CLOSED: usize = 0;
    pub const OPEN: usize = 1;

    pub fn from_counts(counts: [[usize; 2]; 2]) -> Self {
        let mut normalized = [[None; 2]; 2];
        for actual in 0..2 {
            let total = counts[0][actual] + counts[1][actual];
            if total > 0 {
                for (est, row) in normalized.iter_mut().enumerate() {
                    row[actual] = Some(counts[est][actual] as f64 / total as f64);
                }
            }
        }
        Self { counts, normalized }
    }

    /// Cell-wise sum, used to pool sessions.
    pub fn merge(&self, other: &ConfusionMatrix) -> ConfusionMatrix {
        let mut counts = self.counts;
        for (row, other_row) in counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
        Self::from_counts(counts)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn n_correct(&self) -> usize {
        self.counts[Self::CLOSED][Self::CLOSED] + self.counts[Self::OPEN][Self::OPEN]
    }

    /// P(estimated | actual), when that actual class occurred.
    pub fn rate(&self, estimated: EyeStatus, actual: EyeStatus) -> Option<f64> {
        self.normalized[index(estimated)][index(actual)]
    }

    pub fn count(&self, estimated: EyeStatus, actual: EyeStatus) -> usize {
        self.counts[index(estimated)][index(actual)]
    }
}

fn index(status: EyeStatus) -> usize {
    match status {
        EyeStatus::Closed => ConfusionMatrix::CLOSED,
        EyeStatus::Open => ConfusionMatrix::OPEN,
    }
}

fn estimated_status(state: VigilanceState) -> EyeStatus {
    match state {
        VigilanceState::Vigilant => EyeStatus::Open,
        VigilanceState::NonVigilant => EyeStatus::Closed,
    }
}

pub fn confusion(labeled: &[LabeledEpoch]) -> ConfusionMatrix {
    let mut counts = [[0usize; 2]; 2];
    for e in labeled {
        counts[index(estimated_status(e.predicted))][index(e.actual)] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}
