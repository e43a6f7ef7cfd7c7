//! Sample-to-event transducer: epoch assembly, theta power, phase machine.
//!
//! The offline analyzer and the live service both drive a [`Pipeline`], so
//! the same samples always produce the same event sequence.

use std::collections::VecDeque;

use thiserror::Error;

use crate::engine::{
    BaselineProfile, CalibrationConfig, EngineError, EpochMeasurement, SessionMachine, SessionPhase,
};
use crate::event::{EndedEvent, SessionEvent};
use crate::eval::EyeStatusTag;
use crate::signal::{Epoch, EpochAssembler, EpochConfig, Sample, SpectralEstimator, StreamError};
use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug)]
pub struct Pipeline {
    epoch_cfg: EpochConfig,
    assembler: EpochAssembler,
    estimator: SpectralEstimator,
    machine: SessionMachine,
    verdicts: usize,
}

impl Pipeline {
    /// Validates both configurations and returns a pipeline already in
    /// `Calibrating { completed: 0 }`.
    pub fn new(epoch_cfg: EpochConfig, calib_cfg: CalibrationConfig) -> Result<Self, ConfigError> {
        epoch_cfg.validate()?;
        let mut machine = SessionMachine::new(calib_cfg)?;
        machine.start().expect("fresh machine is idle");
        Ok(Self {
            epoch_cfg,
            assembler: EpochAssembler::new(&epoch_cfg),
            estimator: SpectralEstimator::for_config(&epoch_cfg),
            machine,
            verdicts: 0,
        })
    }

    pub fn epoch_config(&self) -> &EpochConfig {
        &self.epoch_cfg
    }

    pub fn phase(&self) -> SessionPhase {
        self.machine.phase()
    }

    pub fn profile(&self) -> Option<&BaselineProfile> {
        self.machine.profile()
    }

    /// Number of verdicts (valid or not) produced so far.
    pub fn verdict_count(&self) -> usize {
        self.verdicts
    }

    pub fn last_t(&self) -> Option<f64> {
        self.assembler.last_t()
    }

    /// Marks the epoch being filled invalid (samples were lost upstream).
    pub fn mark_gap(&mut self) {
        self.assembler.mark_gap();
    }

    pub fn measure(&mut self, epoch: &Epoch) -> EpochMeasurement {
        let bp = self
            .estimator
            .band_power(&epoch.samples, self.epoch_cfg.band_lo_hz, self.epoch_cfg.band_hi_hz)
            .expect("band validated with the config");
        EpochMeasurement {
            index: epoch.index,
            theta_bp: bp.power,
            valid: epoch.valid,
        }
    }

    pub fn push(&mut self, sample: Sample) -> Result<Vec<SessionEvent>, PipelineError> {
        let epochs = self.assembler.push(sample)?;
        let mut events = Vec::new();
        for epoch in &epochs {
            let m = self.measure(epoch);
            let step = self.machine.step(m)?;
            if let Some(profile) = step.baseline {
                events.push(SessionEvent::Baseline(profile.into()));
            }
            if step.phase_changed {
                events.push(SessionEvent::Phase(step.phase));
            }
            if let Some(v) = step.verdict {
                self.verdicts += 1;
                events.push(SessionEvent::Epoch(v));
            }
        }
        Ok(events)
    }
}

/// Releases pre-recorded eye-status tags as the sample clock passes them.
#[derive(Debug, Clone, Default)]
pub struct TagFeed {
    pending: VecDeque<EyeStatusTag>,
}

impl TagFeed {
    pub fn new(mut tags: Vec<EyeStatusTag>) -> Self {
        tags.sort_by(|a, b| a.t.total_cmp(&b.t));
        Self {
            pending: tags.into(),
        }
    }

    /// Tags with `t` at or before the given sample time.
    pub fn due(&mut self, t: f64) -> Vec<EyeStatusTag> {
        let mut out = Vec::new();
        while self.pending.front().is_some_and(|tag| tag.t <= t) {
            out.extend(self.pending.pop_front());
        }
        out
    }

    pub fn drain(&mut self) -> Vec<EyeStatusTag> {
        self.pending.drain(..).collect()
    }
}

/// Runs a finite sample stream through a fresh pipeline and returns the full
/// event sequence, from the initial phase event through `Ended`.
pub fn run_offline<I, E>(
    samples: I,
    tags: Vec<EyeStatusTag>,
    epoch_cfg: EpochConfig,
    calib_cfg: CalibrationConfig,
) -> Result<Vec<SessionEvent>, OfflineError<E>>
where
    I: IntoIterator<Item = Result<Sample, E>>,
{
    let mut events = Vec::new();
    run_stream(samples, tags, epoch_cfg, calib_cfg, |e| events.push(e.clone()))?;
    Ok(events)
}

/// [`run_offline`], handing each event to `sink` as soon as it exists.
/// Tags are released just before the first sample at or after their time.
pub fn run_stream<I, E, F>(
    samples: I,
    tags: Vec<EyeStatusTag>,
    epoch_cfg: EpochConfig,
    calib_cfg: CalibrationConfig,
    mut sink: F,
) -> Result<(), OfflineError<E>>
where
    I: IntoIterator<Item = Result<Sample, E>>,
    F: FnMut(&SessionEvent),
{
    let mut pipeline = Pipeline::new(epoch_cfg, calib_cfg).map_err(OfflineError::Config)?;
    let mut feed = TagFeed::new(tags);
    sink(&SessionEvent::Phase(pipeline.phase()));
    for sample in samples {
        let sample = sample.map_err(OfflineError::Source)?;
        for tag in feed.due(sample.t) {
            sink(&SessionEvent::Tag(tag));
        }
        for event in pipeline.push(sample).map_err(OfflineError::Pipeline)? {
            sink(&event);
        }
    }
    for tag in feed.drain() {
        sink(&SessionEvent::Tag(tag));
    }
    sink(&SessionEvent::Ended(EndedEvent::exhausted(0)));
    Ok(())
}

#[derive(Debug, Error)]
pub enum OfflineError<E> {
    #[error(transparent)]
    Config(ConfigError),
    #[error("source: {0}")]
    Source(E),
    #[error(transparent)]
    Pipeline(PipelineError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::VigilanceState;
    use std::convert::Infallible;
    use std::f64::consts::PI;

    /// 6 Hz sinusoid whose amplitude follows `amp_at(t)`.
    fn session(seconds: usize, amp_at: impl Fn(f64) -> f64) -> Vec<Result<Sample, Infallible>> {
        (0..seconds * 256)
            .map(|j| {
                let t = j as f64 / 256.0;
                Ok(Sample::new(t, amp_at(t) * (2.0 * PI * 6.0 * t).sin()))
            })
            .collect()
    }

    #[test]
    fn calibration_then_monitoring() {
        let samples = session(180, |t| if t < 30.0 { 1.0 } else { 2.0 });
        let events =
            run_offline(samples, vec![], EpochConfig::default(), CalibrationConfig::default())
                .unwrap();
        assert_eq!(
            events[0],
            SessionEvent::Phase(SessionPhase::Calibrating { completed: 0 })
        );
        let verdicts: Vec<_> = events.iter().filter_map(|e| e.verdict()).collect();
        assert_eq!(verdicts.len(), 30);
        assert!(verdicts
            .iter()
            .all(|v| v.state == Some(VigilanceState::Vigilant)));
        let base_pos = events.iter().position(|e| e.baseline().is_some()).unwrap();
        let first_epoch = events.iter().position(|e| e.verdict().is_some()).unwrap();
        assert!(base_pos < first_epoch);
        assert_eq!(
            events[base_pos + 1],
            SessionEvent::Phase(SessionPhase::Monitoring)
        );
        let profile = events[base_pos].baseline().unwrap();
        assert!((profile.mean_theta_bp() - 0.5).abs() < 1e-9);
        assert!(events.last().unwrap().is_ended());
    }

    #[test]
    fn tags_interleave_by_sample_clock() {
        use crate::eval::EyeStatus;
        let samples = session(40, |_| 1.0);
        let tags = vec![
            EyeStatusTag {
                t: 0.0,
                status: EyeStatus::Closed,
            },
            EyeStatusTag {
                t: 35.0,
                status: EyeStatus::Open,
            },
            EyeStatusTag {
                t: 100.0,
                status: EyeStatus::Closed,
            },
        ];
        let events =
            run_offline(samples, tags, EpochConfig::default(), CalibrationConfig::default())
                .unwrap();
        assert!(matches!(events[1], SessionEvent::Tag(_)));
        let open_pos = events
            .iter()
            .position(|e| e.tag().is_some_and(|t| t.t == 35.0))
            .unwrap();
        // Epoch 6 (30–35 s) completes on the sample at 35 − 1/256 s, before the tag.
        let epoch6 = events
            .iter()
            .position(|e| e.verdict().is_some_and(|v| v.index == 6))
            .unwrap();
        assert!(epoch6 < open_pos);
        // A tag past the end of the stream is still recorded before Ended.
        assert!(events[events.len() - 2].tag().is_some());
    }
}
