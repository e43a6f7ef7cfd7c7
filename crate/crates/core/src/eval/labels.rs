use serde::{Deserialize, Serialize};

use super::{EvalError, EyeStatus, EyeStatusTag};
use crate::engine::{EpochVerdict, VigilanceState};
use crate::signal::EpochConfig;

/// A valid monitored epoch paired with the eye status that covered it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledEpoch {
    pub epoch_index: usize,
    pub actual: EyeStatus,
    pub predicted: VigilanceState,
}

impl LabeledEpoch {
    pub fn is_correct(&self) -> bool {
        self.actual.expected_state() == self.predicted
    }
}

/// Assigns each valid verdict the eye status covering the majority of its
/// time span. An exact 50/50 split goes to the status in effect just before
/// the epoch midpoint. Invalid verdicts are dropped.
pub fn label_epochs(
    tags: &[EyeStatusTag],
    verdicts: &[EpochVerdict],
    cfg: &EpochConfig,
) -> Result<Vec<LabeledEpoch>, EvalError> {
    for pair in tags.windows(2) {
        if pair[1].t <= pair[0].t {
            return Err(EvalError::TagsNotIncreasing { t: pair[1].t });
        }
    }
    let scored: Vec<_> = verdicts
        .iter()
        .filter_map(|v| v.state.filter(|_| v.valid).map(|s| (v.index, s)))
        .collect();
    let Some(&(first, _)) = scored.first() else {
        return Ok(Vec::new());
    };
    let first_start = cfg.epoch_start(first);
    if tags.first().is_none_or(|tag| tag.t > first_start) {
        return Err(EvalError::NoTagBeforeEpoch {
            epoch_start: first_start,
        });
    }

    let len = cfg.epoch_seconds as f64;
    let tie_tolerance = 1e-9 * len;
    Ok(scored
        .into_iter()
        .map(|(index, predicted)| {
            let start = cfg.epoch_start(index);
            let end = start + len;
            let (mut open, mut closed) = (0.0, 0.0);
            for (i, tag) in tags.iter().enumerate() {
                let from = tag.t.max(start);
                let to = tags.get(i + 1).map_or(end, |next| next.t.min(end));
                if to > from {
                    match tag.status {
                        EyeStatus::Open => open += to - from,
                        EyeStatus::Closed => closed += to - from,
                    }
                }
            }
            let actual = if (open - closed).abs() <= tie_tolerance {
                status_before(tags, start + len / 2.0)
            } else if open > closed {
                EyeStatus::Open
            } else {
                EyeStatus::Closed
            };
            LabeledEpoch {
                epoch_index: index,
                actual,
                predicted,
            }
        })
        .collect())
}

/// Status in effect on the open interval just left of `t`.
fn status_before(tags: &[EyeStatusTag], t: f64) -> EyeStatus {
    tags.iter()
        .take_while(|tag| tag.t < t)
        .last()
        .unwrap_or(&tags[0])
        .status
}
