//! Session events. The JSON form is shared by live frames and by the
//! session record file: one object per event with a `type` discriminator.
//!
//! ```text
//! {"type":"phase","phase":"calibrating","completed":3}
//! {"type":"baseline","mean_theta_bp":…,"scaling":1.1,"threshold":…}
//! {"type":"epoch","index":6,"theta_bp":…,"threshold":…,"state":"vigilant","valid":true}
//! {"type":"tag","t":30.0,"status":"open"}
//! {"type":"ended","reason":"requested","skip_count":0}
//! ```

use serde::{Deserialize, Serialize};

use crate::engine::{BaselineProfile, EpochVerdict, SessionPhase};
use crate::eval::EyeStatusTag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SessionEvent {
    Phase(SessionPhase),
    Baseline(BaselineEvent),
    Epoch(EpochVerdict),
    Tag(EyeStatusTag),
    Ended(EndedEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEvent {
    #[serde(flatten)]
    pub profile: BaselineProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl From<BaselineProfile> for BaselineEvent {
    fn from(profile: BaselineProfile) -> Self {
        let warning = profile
            .is_degenerate()
            .then(|| "zero baseline: every nonzero epoch will classify vigilant".to_string());
        Self { profile, warning }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndedEvent {
    /// `requested`, `source_exhausted`, or `error: <diagnostic>`.
    pub reason: String,
    #[serde(default)]
    pub skip_count: u64,
}

impl EndedEvent {
    pub const REQUESTED: &'static str = "requested";
    pub const SOURCE_EXHAUSTED: &'static str = "source_exhausted";

    pub fn requested(skip_count: u64) -> Self {
        Self {
            reason: Self::REQUESTED.to_string(),
            skip_count,
        }
    }

    pub fn exhausted(skip_count: u64) -> Self {
        Self {
            reason: Self::SOURCE_EXHAUSTED.to_string(),
            skip_count,
        }
    }

    pub fn error(diagnostic: impl std::fmt::Display, skip_count: u64) -> Self {
        Self {
            reason: format!("error: {diagnostic}"),
            skip_count,
        }
    }
}

impl SessionEvent {
    pub fn verdict(&self) -> Option<&EpochVerdict> {
        match self {
            SessionEvent::Epoch(v) => Some(v),
            _ => None,
        }
    }

    pub fn tag(&self) -> Option<&EyeStatusTag> {
        match self {
            SessionEvent::Tag(t) => Some(t),
            _ => None,
        }
    }

    pub fn baseline(&self) -> Option<&BaselineProfile> {
        match self {
            SessionEvent::Baseline(b) => Some(&b.profile),
            _ => None,
        }
    }

    pub fn is_ended(&self) -> bool {
        matches!(self, SessionEvent::Ended(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::VigilanceState;
    use crate::eval::EyeStatus;

    #[test]
    fn epoch_frame_shape_is_exact() {
        let ev = SessionEvent::Epoch(EpochVerdict {
            index: 7,
            theta_bp: 12.5,
            threshold: 11.0,
            state: Some(VigilanceState::Vigilant),
            valid: true,
        });
        assert_eq!(
            serde_json::to_string(&ev).unwrap(),
            r#"{"type":"epoch","index":7,"theta_bp":12.5,"threshold":11.0,"state":"vigilant","valid":true}"#
        );
        let invalid = SessionEvent::Epoch(EpochVerdict {
            index: 8,
            theta_bp: 3.0,
            threshold: 11.0,
            state: None,
            valid: false,
        });
        assert_eq!(
            serde_json::to_string(&invalid).unwrap(),
            r#"{"type":"epoch","index":8,"theta_bp":3.0,"threshold":11.0,"state":null,"valid":false}"#
        );
    }

    #[test]
    fn other_frame_shapes() {
        let phase = SessionEvent::Phase(SessionPhase::Calibrating { completed: 0 });
        assert_eq!(
            serde_json::to_string(&phase).unwrap(),
            r#"{"type":"phase","phase":"calibrating","completed":0}"#
        );
        let tag = SessionEvent::Tag(EyeStatusTag {
            t: 0.0,
            status: EyeStatus::Closed,
        });
        assert_eq!(
            serde_json::to_string(&tag).unwrap(),
            r#"{"type":"tag","t":0.0,"status":"closed"}"#
        );
        let base = SessionEvent::Baseline(BaselineProfile::new(2.0, 1.5).into());
        assert_eq!(
            serde_json::to_string(&base).unwrap(),
            r#"{"type":"baseline","mean_theta_bp":2.0,"scaling":1.5,"threshold":3.0}"#
        );
    }

    #[test]
    fn events_round_trip() {
        let events = vec![
            SessionEvent::Phase(SessionPhase::Calibrating { completed: 2 }),
            SessionEvent::Phase(SessionPhase::Monitoring),
            SessionEvent::Baseline(BaselineProfile::new(0.0, 1.1).into()),
            SessionEvent::Ended(EndedEvent::error("bad clock", 3)),
        ];
        for ev in events {
            let s = serde_json::to_string(&ev).unwrap();
            assert_eq!(serde_json::from_str::<SessionEvent>(&s).unwrap(), ev, "{s}");
        }
    }
}
