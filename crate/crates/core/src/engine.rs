//! Baseline calibration, threshold classification and the per-session phase
//! machine.
//!
//! A session starts in [`SessionPhase::Idle`]. Once started it collects the
//! theta band power of `baseline_epoch_count` eyes-closed epochs, sets the
//! threshold to `scaling × mean`, then classifies every later epoch:
//! vigilant when its theta power is strictly above the threshold.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub baseline_epoch_count: usize,
    pub scaling: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            baseline_epoch_count: 6,
            scaling: 1.1,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.baseline_epoch_count == 0 {
            return Err(ConfigError::new("baseline_epoch_count", "must be at least 1"));
        }
        if !(self.scaling.is_finite() && self.scaling > 0.0) {
            return Err(ConfigError::new(
                "scaling",
                format!("must be a positive number, got {}", self.scaling),
            ));
        }
        Ok(())
    }
}

/// Mean eyes-closed theta power and the threshold derived from it. The
/// threshold is always recomputed from `scaling × mean_theta_bp`, including
/// on deserialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileFields")]
pub struct BaselineProfile {
    mean_theta_bp: f64,
    scaling: f64,
    threshold: f64,
}

#[derive(Deserialize)]
struct ProfileFields {
    mean_theta_bp: f64,
    scaling: f64,
    threshold: f64,
}

impl TryFrom<ProfileFields> for BaselineProfile {
    type Error = String;

    fn try_from(f: ProfileFields) -> Result<Self, Self::Error> {
        let p = BaselineProfile::new(f.mean_theta_bp, f.scaling);
        if p.threshold.to_bits() != f.threshold.to_bits() {
            return Err(format!(
                "threshold {} is not scaling {} × mean {}",
                f.threshold, f.scaling, f.mean_theta_bp
            ));
        }
        Ok(p)
    }
}

impl BaselineProfile {
    pub fn new(mean_theta_bp: f64, scaling: f64) -> Self {
        Self {
            mean_theta_bp,
            scaling,
            threshold: scaling * mean_theta_bp,
        }
    }

    pub fn mean_theta_bp(&self) -> f64 {
        self.mean_theta_bp
    }

    pub fn scaling(&self) -> f64 {
        self.scaling
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// A zero baseline makes every nonzero epoch vigilant. Allowed, but worth
    /// a warning in the session log.
    pub fn is_degenerate(&self) -> bool {
        self.mean_theta_bp == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VigilanceState {
    Vigilant,
    #[serde(rename = "nonvigilant")]
    NonVigilant,
}

/// Theta power of one epoch as it enters the state machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMeasurement {
    pub index: usize,
    pub theta_bp: f64,
    pub valid: bool,
}

/// Classification of one monitored epoch. Invalid epochs carry no state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochVerdict {
    pub index: usize,
    pub theta_bp: f64,
    pub threshold: f64,
    pub state: Option<VigilanceState>,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "lowercase")]
pub enum SessionPhase {
    Idle,
    Calibrating { completed: usize },
    Monitoring,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("expected {expected} baseline epochs, got {got}")]
    BaselineCount { expected: usize, got: usize },
    #[error("baseline epoch {index} is invalid; calibration must restart")]
    InvalidBaselineEpoch { index: usize },
    #[error("epoch {index} arrived while the session is idle")]
    NotStarted { index: usize },
    #[error("session already started")]
    AlreadyStarted,
    #[error("epoch {index} arrived after epoch {last}")]
    OutOfOrder { index: usize, last: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Mean of the baseline epochs' theta power, scaled into a threshold.
pub fn calibrate(
    baseline: &[EpochMeasurement],
    cfg: &CalibrationConfig,
) -> Result<BaselineProfile, EngineError> {
    cfg.validate()?;
    if baseline.len() != cfg.baseline_epoch_count {
        return Err(EngineError::BaselineCount {
            expected: cfg.baseline_epoch_count,
            got: baseline.len(),
        });
    }
    if let Some(bad) = baseline.iter().find(|m| !m.valid) {
        return Err(EngineError::InvalidBaselineEpoch { index: bad.index });
    }
    let mean = baseline.iter().map(|m| m.theta_bp).sum::<f64>() / baseline.len() as f64;
    Ok(BaselineProfile::new(mean, cfg.scaling))
}

/// Strictly above the threshold is vigilant; a tie is not.
pub fn classify(theta_bp: f64, profile: &BaselineProfile) -> VigilanceState {
    if theta_bp > profile.threshold() {
        VigilanceState::Vigilant
    } else {
        VigilanceState::NonVigilant
    }
}

/// What one epoch did to the session.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub phase: SessionPhase,
    pub phase_changed: bool,
    pub verdict: Option<EpochVerdict>,
    pub baseline: Option<BaselineProfile>,
}

#[derive(Debug, Clone)]
pub struct SessionMachine {
    cfg: CalibrationConfig,
    phase: SessionPhase,
    pending: Vec<EpochMeasurement>,
    profile: Option<BaselineProfile>,
    last_index: Option<usize>,
}

impl SessionMachine {
    pub fn new(cfg: CalibrationConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            phase: SessionPhase::Idle,
            pending: Vec::with_capacity(cfg.baseline_epoch_count),
            profile: None,
            last_index: None,
        })
    }

    pub fn phase(&self) -> SessionPhase {
        self.phase
    }

    pub fn profile(&self) -> Option<&BaselineProfile> {
        self.profile.as_ref()
    }

    pub fn config(&self) -> &CalibrationConfig {
        &self.cfg
    }

    pub fn start(&mut self) -> Result<SessionPhase, EngineError> {
        if self.phase != SessionPhase::Idle {
            return Err(EngineError::AlreadyStarted);
        }
        self.phase = SessionPhase::Calibrating { completed: 0 };
        Ok(self.phase)
    }

    /// Consumes the next epoch in index order.
    ///
    /// During calibration an invalid epoch discards the baseline collected so
    /// far and calibration starts over with the next valid epoch.
    pub fn step(&mut self, m: EpochMeasurement) -> Result<Step, EngineError> {
        if let Some(last) = self.last_index {
            if m.index <= last {
                return Err(EngineError::OutOfOrder {
                    index: m.index,
                    last,
                });
            }
        }
        let before = self.phase;
        let mut step = Step {
            phase: before,
            phase_changed: false,
            verdict: None,
            baseline: None,
        };
        match before {
            SessionPhase::Idle => return Err(EngineError::NotStarted { index: m.index }),
            SessionPhase::Calibrating { .. } => {
                if m.valid {
                    self.pending.push(m);
                } else {
                    self.pending.clear();
                }
                if self.pending.len() == self.cfg.baseline_epoch_count {
                    let profile = calibrate(&self.pending, &self.cfg)?;
                    self.pending.clear();
                    self.profile = Some(profile);
                    self.phase = SessionPhase::Monitoring;
                    step.baseline = Some(profile);
                } else {
                    self.phase = SessionPhase::Calibrating {
                        completed: self.pending.len(),
                    };
                }
            }
            SessionPhase::Monitoring => {
                let profile = self.profile.expect("monitoring without a baseline");
                step.verdict = Some(EpochVerdict {
                    index: m.index,
                    theta_bp: m.theta_bp,
                    threshold: profile.threshold(),
                    state: m.valid.then(|| classify(m.theta_bp, &profile)),
                    valid: m.valid,
                });
            }
        }
        self.last_index = Some(m.index);
        step.phase = self.phase;
        step.phase_changed = self.phase != before;
        Ok(step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn valid(index: usize, theta_bp: f64) -> EpochMeasurement {
        EpochMeasurement {
            index,
            theta_bp,
            valid: true,
        }
    }

    fn run_baseline(values: &[f64]) -> Result<BaselineProfile, EngineError> {
        let ms: Vec<_> = values.iter().enumerate().map(|(i, &b)| valid(i, b)).collect();
        calibrate(&ms, &CalibrationConfig::default())
    }

    #[test]
    fn calibrate_examples() {
        let p = run_baseline(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(p.mean_theta_bp(), 3.5);
        assert!((p.threshold() - 3.85).abs() < 1e-12);
        assert_eq!(p.threshold(), 1.1 * 3.5);

        let p = run_baseline(&[7.5; 6]).unwrap();
        assert_eq!(p.mean_theta_bp(), 7.5);
        assert_eq!(p.threshold(), 1.1 * 7.5);

        let p = run_baseline(&[0.0; 6]).unwrap();
        assert_eq!(p.threshold(), 0.0);
        assert!(p.is_degenerate());
        assert_eq!(classify(1e-12, &p), VigilanceState::Vigilant);
    }

    #[test]
    fn calibrate_errors() {
        assert!(matches!(
            run_baseline(&[1.0; 5]),
            Err(EngineError::BaselineCount { expected: 6, got: 5 })
        ));
        let mut ms: Vec<_> = (0..6).map(|i| valid(i, 1.0)).collect();
        ms[3].valid = false;
        assert!(matches!(
            calibrate(&ms, &CalibrationConfig::default()),
            Err(EngineError::InvalidBaselineEpoch { index: 3 })
        ));
    }

    #[test]
    fn classify_is_strict() {
        let p = BaselineProfile::new(3.5, 1.1);
        let t = p.threshold();
        assert_eq!(classify(3.86, &p), VigilanceState::Vigilant);
        assert_eq!(classify(t, &p), VigilanceState::NonVigilant);
        assert_eq!(classify(0.0, &p), VigilanceState::NonVigilant);
    }

    #[test]
    fn session_walkthrough() {
        let mut sm = SessionMachine::new(CalibrationConfig::default()).unwrap();
        assert!(matches!(
            sm.step(valid(0, 10.0)),
            Err(EngineError::NotStarted { .. })
        ));
        sm.start().unwrap();
        for i in 0..5 {
            let s = sm.step(valid(i, 10.0)).unwrap();
            assert_eq!(s.phase, SessionPhase::Calibrating { completed: i + 1 });
            assert!(s.verdict.is_none() && s.baseline.is_none());
        }
        let s = sm.step(valid(5, 10.0)).unwrap();
        assert_eq!(s.phase, SessionPhase::Monitoring);
        let p = s.baseline.unwrap();
        assert_eq!(p.mean_theta_bp(), 10.0);
        assert!((p.threshold() - 11.0).abs() < 1e-12);

        let v = sm.step(valid(6, 12.0)).unwrap().verdict.unwrap();
        assert_eq!(v.state, Some(VigilanceState::Vigilant));
        let v = sm.step(valid(7, 10.9)).unwrap().verdict.unwrap();
        assert_eq!(v.state, Some(VigilanceState::NonVigilant));

        let v = sm
            .step(EpochMeasurement {
                index: 8,
                theta_bp: 50.0,
                valid: false,
            })
            .unwrap()
            .verdict
            .unwrap();
        assert_eq!(v.state, None);
        assert!(!v.valid);
        assert_eq!(sm.phase(), SessionPhase::Monitoring);
    }

    #[test]
    fn invalid_epoch_at_start_of_calibration_keeps_phase() {
        let mut sm = SessionMachine::new(CalibrationConfig::default()).unwrap();
        sm.start().unwrap();
        let s = sm
            .step(EpochMeasurement {
                index: 0,
                theta_bp: 1.0,
                valid: false,
            })
            .unwrap();
        assert_eq!(s.phase, SessionPhase::Calibrating { completed: 0 });
        assert!(!s.phase_changed);
    }

    #[test]
    fn invalid_epoch_restarts_calibration() {
        let mut sm = SessionMachine::new(CalibrationConfig::default()).unwrap();
        sm.start().unwrap();
        for i in 0..3 {
            sm.step(valid(i, 100.0)).unwrap();
        }
        let s = sm
            .step(EpochMeasurement {
                index: 3,
                theta_bp: 1.0,
                valid: false,
            })
            .unwrap();
        assert_eq!(s.phase, SessionPhase::Calibrating { completed: 0 });
        for i in 4..10 {
            sm.step(valid(i, 2.0)).unwrap();
        }
        // The contaminated 100.0 values were discarded.
        assert_eq!(sm.profile().unwrap().mean_theta_bp(), 2.0);
    }

    #[test]
    fn out_of_order_rejected() {
        let mut sm = SessionMachine::new(CalibrationConfig::default()).unwrap();
        sm.start().unwrap();
        sm.step(valid(2, 1.0)).unwrap();
        assert!(matches!(
            sm.step(valid(2, 1.0)),
            Err(EngineError::OutOfOrder { .. })
        ));
    }

    #[test]
    fn profile_json_enforces_threshold() {
        let p = BaselineProfile::new(3.5, 1.1);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<BaselineProfile>(&json).unwrap(), p);
        let forged = r#"{"mean_theta_bp":3.5,"scaling":1.1,"threshold":9.0}"#;
        assert!(serde_json::from_str::<BaselineProfile>(forged).is_err());
    }

    #[test]
    fn phase_json_shape() {
        let s = serde_json::to_string(&SessionPhase::Calibrating { completed: 2 }).unwrap();
        assert_eq!(s, r#"{"phase":"calibrating","completed":2}"#);
        let s = serde_json::to_string(&VigilanceState::NonVigilant).unwrap();
        assert_eq!(s, r#""nonvigilant""#);
    }
}
