//! Tumbling-window framing of a timestamped sample stream.
//!
//! Epoch `k` covers `[k·T, (k+1)·T)` seconds since session start. A sample is
//! placed into its nominal slot `round(t·fs)`; epoch `k` owns slots
//! `k·N .. (k+1)·N`. An epoch is emitted the moment its last slot is written,
//! or, when that slot never arrives, as soon as a later epoch receives data.
//!
//! An inter-sample gap wider than two nominal intervals marks every epoch it
//! touches invalid. Missing slots (from a gap, or a single dropped sample,
//! which is tolerated) are filled by holding the previous value, so every
//! emitted epoch has exactly `N` samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::EpochConfig;

/// One reading from the frontal channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Seconds since session start.
    pub t: f64,
    /// Amplitude in microvolts.
    pub uv: f64,
}

impl Sample {
    pub fn new(t: f64, uv: f64) -> Self {
        Self { t, uv }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub index: usize,
    pub start_t: f64,
    pub samples: Vec<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StreamError {
    #[error("timestamp {t} does not follow previous timestamp {prev}")]
    NonMonotone { prev: f64, t: f64 },
    #[error("sample at t={t} has non-finite or negative time, or non-finite amplitude {uv}")]
    BadSample { t: f64, uv: f64 },
}

/// Subtracts the arithmetic mean. A second pass removes the rounding residue
/// left by the first so the output mean is zero to within 1e-12 even for
/// large electrode offsets.
pub fn remove_dc(epoch: &Epoch) -> Epoch {
    let mut samples = epoch.samples.clone();
    subtract_mean(&mut samples);
    Epoch {
        samples,
        ..epoch.clone()
    }
}

pub(crate) fn subtract_mean(samples: &mut [f64]) {
    if samples.is_empty() {
        return;
    }
    let n = samples.len() as f64;
    for _ in 0..2 {
        let mean = samples.iter().sum::<f64>() / n;
        samples.iter_mut().for_each(|x| *x -= mean);
    }
}

/// Stateful transducer from samples to epochs. One producer per session.
#[derive(Debug, Clone)]
pub struct EpochAssembler {
    sample_rate: f64,
    n: usize,
    epoch_seconds: f64,
    current: usize,
    values: Vec<f64>,
    filled: Vec<bool>,
    has_data: bool,
    gap: bool,
    last_t: Option<f64>,
    last_slot: Option<u64>,
    carry: Option<f64>,
}

impl EpochAssembler {
    pub fn new(cfg: &EpochConfig) -> Self {
        let n = cfg.samples_per_epoch();
        Self {
            sample_rate: cfg.sample_rate_hz as f64,
            n,
            epoch_seconds: cfg.epoch_seconds as f64,
            current: 0,
            values: vec![0.0; n],
            filled: vec![false; n],
            has_data: false,
            gap: false,
            last_t: None,
            last_slot: None,
            carry: None,
        }
    }

    /// Index of the epoch currently being filled.
    pub fn current_index(&self) -> usize {
        self.current
    }

    /// Timestamp of the last accepted sample.
    pub fn last_t(&self) -> Option<f64> {
        self.last_t
    }

    /// Marks the epoch being filled as invalid, e.g. after an ingest buffer
    /// overrun dropped samples.
    pub fn mark_gap(&mut self) {
        self.gap = true;
    }

    /// Feeds one sample, returning the epochs it completes (usually none or
    /// one; several when a long gap skips over whole windows).
    pub fn push(&mut self, sample: Sample) -> Result<Vec<Epoch>, StreamError> {
        let Sample { t, uv } = sample;
        if !t.is_finite() || t < 0.0 || !uv.is_finite() {
            return Err(StreamError::BadSample { t, uv });
        }
        if let Some(prev) = self.last_t {
            if t <= prev {
                return Err(StreamError::NonMonotone { prev, t });
            }
        }

        let nominal = 1.0 / self.sample_rate;
        let prev = self.last_t.unwrap_or(-nominal);
        let gap = t - prev > 2.0 * nominal * (1.0 + 1e-9);
        self.last_t = Some(t);

        let slot = (t * self.sample_rate).round() as u64;
        let mut out = Vec::new();
        if self.last_slot.is_some_and(|last| slot <= last) {
            // Two timestamps rounding onto one slot: the clock is irregular.
            self.gap = true;
            return Ok(out);
        }
        self.last_slot = Some(slot);

        if gap {
            self.gap = true;
        }
        let target = (slot / self.n as u64) as usize;
        while self.current < target {
            self.finish_current(&mut out);
            self.gap = gap;
        }

        let pos = (slot % self.n as u64) as usize;
        self.values[pos] = uv;
        self.filled[pos] = true;
        self.has_data = true;
        if pos == self.n - 1 {
            self.finish_current(&mut out);
        }
        Ok(out)
    }

    fn finish_current(&mut self, out: &mut Vec<Epoch>) {
        let mut carry = self
            .carry
            .or_else(|| {
                self.filled
                    .iter()
                    .position(|&f| f)
                    .map(|i| self.values[i])
            })
            .unwrap_or(0.0);
        let mut samples = Vec::with_capacity(self.n);
        for (v, f) in self.values.iter().zip(&self.filled) {
            if *f {
                carry = *v;
            }
            samples.push(carry);
        }
        // A window that never saw a sample can only arise inside a gap.
        let valid = !self.gap && self.has_data;
        out.push(Epoch {
            index: self.current,
            start_t: self.current as f64 * self.epoch_seconds,
            samples,
            valid,
        });
        self.carry = Some(carry);
        self.current += 1;
        self.filled.iter_mut().for_each(|f| *f = false);
        self.has_data = false;
        self.gap = false;
    }
}
