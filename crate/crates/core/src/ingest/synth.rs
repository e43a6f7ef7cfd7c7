//! Deterministic synthetic EEG.
//!
//! Sample `j` has `t = j / fs` and
//! `uv = Σ a·sin(2π·f·t + φ) + σ·z`, where the sum runs over the active
//! segment's components and `z` is standard normal. Noise comes from
//! `ChaCha8Rng::seed_from_u64(seed)` through `rand_distr::StandardNormal`
//! (ziggurat); both are pinned in the lockfile, so a config always produces
//! the same bits. Segments with `σ = 0` draw nothing from the generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::eval::{EyeStatus, EyeStatusTag};
use crate::signal::Sample;
use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub freq_hz: f64,
    pub amplitude_uv: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration_s: f64,
    #[serde(default)]
    pub components: Vec<Component>,
    #[serde(default)]
    pub noise_sigma_uv: f64,
    /// Ground-truth eye status for this stretch, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eyes: Option<EyeStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    #[serde(default = "default_rate")]
    pub sample_rate_hz: u32,
    #[serde(default)]
    pub seed: u64,
    pub segments: Vec<Segment>,
}

fn default_rate() -> u32 {
    256
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.sample_rate_hz == 0 {
            return Err(ConfigError::new("sample_rate_hz", "must be positive"));
        }
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        for (i, seg) in self.segments.iter().enumerate() {
            if !(seg.duration_s.is_finite() && seg.duration_s >= 0.0) {
                return Err(ConfigError::new(
                    "segments",
                    format!("segment {i}: duration {} is not a non-negative number", seg.duration_s),
                ));
            }
            if !(seg.noise_sigma_uv.is_finite() && seg.noise_sigma_uv >= 0.0) {
                return Err(ConfigError::new(
                    "noise_sigma_uv",
                    format!("segment {i}: sigma {} must be >= 0", seg.noise_sigma_uv),
                ));
            }
            for c in &seg.components {
                if !(c.freq_hz.is_finite() && c.freq_hz >= 0.0 && c.freq_hz < nyquist) {
                    return Err(ConfigError::new(
                        "freq_hz",
                        format!("segment {i}: {} Hz is not below Nyquist {nyquist} Hz", c.freq_hz),
                    ));
                }
                if !(c.amplitude_uv.is_finite() && c.phase_rad.is_finite()) {
                    return Err(ConfigError::new(
                        "amplitude_uv",
                        format!("segment {i}: non-finite component"),
                    ));
                }
            }
        }
        if self.total_samples() == 0 {
            return Err(ConfigError::new("segments", "total duration must be positive"));
        }
        Ok(())
    }

    fn segment_samples(&self, seg: &Segment) -> u64 {
        (seg.duration_s * self.sample_rate_hz as f64).round() as u64
    }

    pub fn total_samples(&self) -> u64 {
        self.segments.iter().map(|s| self.segment_samples(s)).sum()
    }

    pub fn duration_s(&self) -> f64 {
        self.total_samples() as f64 / self.sample_rate_hz as f64
    }

    /// One tag at the start of every labeled segment whose status differs
    /// from the previous tag.
    pub fn ground_truth_tags(&self) -> Vec<EyeStatusTag> {
        let mut tags: Vec<EyeStatusTag> = Vec::new();
        let mut start = 0u64;
        for seg in &self.segments {
            if let Some(status) = seg.eyes {
                if tags.last().is_none_or(|t| t.status != status) {
                    tags.push(EyeStatusTag {
                        t: start as f64 / self.sample_rate_hz as f64,
                        status,
                    });
                }
            }
            start += self.segment_samples(seg);
        }
        tags
    }
}

pub struct Synthesizer {
    cfg: SyntheticConfig,
    rng: ChaCha8Rng,
    j: u64,
    seg: usize,
    seg_end: u64,
}

impl std::fmt::Debug for Synthesizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Synthesizer")
            .field("j", &self.j)
            .field("seg", &self.seg)
            .finish()
    }
}

pub fn synthesize(cfg: &SyntheticConfig) -> Result<Synthesizer, ConfigError> {
    cfg.validate()?;
    let first_end = cfg.segments.first().map_or(0, |s| cfg.segment_samples(s));
    Ok(Synthesizer {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        cfg: cfg.clone(),
        j: 0,
        seg: 0,
        seg_end: first_end,
    })
}

impl Iterator for Synthesizer {
    type Item = Result<Sample, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        while self.j >= self.seg_end {
            self.seg += 1;
            let seg = self.cfg.segments.get(self.seg)?;
            self.seg_end += self.cfg.segment_samples(seg);
        }
        let seg = &self.cfg.segments[self.seg];
        let t = self.j as f64 / self.cfg.sample_rate_hz as f64;
        let mut uv: f64 = seg
            .components
            .iter()
            .map(|c| {
                c.amplitude_uv * (2.0 * std::f64::consts::PI * c.freq_hz * t + c.phase_rad).sin()
            })
            .sum();
        if seg.noise_sigma_uv > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            uv += seg.noise_sigma_uv * z;
        }
        self.j += 1;
        Some(Ok(Sample::new(t, uv)))
    }
}

pub const PRESET_NAMES: [&str; 4] = ["vigilance-demo", "natural-demo", "closed", "open"];

/// Theta frequency of every preset, Hz. Integer bin at 0.2 Hz resolution.
const PRESET_THETA_HZ: f64 = 6.0;

/// Eyes-closed and eyes-open stand-ins: closed carries theta amplitude `a`,
/// open carries `2a`. These are verification scaffolding, not physiological
/// models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    #[serde(default = "default_amplitude")]
    pub theta_amplitude_uv: f64,
    #[serde(default)]
    pub noise_sigma_uv: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_amplitude() -> f64 {
    10.0
}

impl Preset {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            theta_amplitude_uv: default_amplitude(),
            noise_sigma_uv: 0.0,
            seed: 0,
        }
    }

    fn segment(&self, eyes: EyeStatus, duration_s: f64) -> Segment {
        let amp = match eyes {
            EyeStatus::Closed => self.theta_amplitude_uv,
            EyeStatus::Open => 2.0 * self.theta_amplitude_uv,
        };
        Segment {
            duration_s,
            components: vec![Component {
                freq_hz: PRESET_THETA_HZ,
                amplitude_uv: amp,
                phase_rad: 0.0,
            }],
            noise_sigma_uv: self.noise_sigma_uv,
            eyes: Some(eyes),
        }
    }

    pub fn to_config(&self) -> Result<SyntheticConfig, ConfigError> {
        use EyeStatus::{Closed, Open};
        let layout: &[(EyeStatus, f64)] = match self.name.as_str() {
            // 30 s baseline, then 30 s open / closed alternation: 180 s.
            "vigilance-demo" => &[
                (Closed, 30.0),
                (Open, 30.0),
                (Closed, 30.0),
                (Open, 30.0),
                (Closed, 30.0),
                (Open, 30.0),
            ],
            // Irregular switching, some boundaries inside epochs: 180 s.
            "natural-demo" => &[
                (Closed, 30.0),
                (Open, 22.5),
                (Closed, 17.5),
                (Open, 40.0),
                (Closed, 25.0),
                (Open, 20.0),
                (Closed, 25.0),
            ],
            "closed" => &[(Closed, 60.0)],
            "open" => &[(Open, 60.0)],
            other => {
                return Err(ConfigError::new(
                    "preset",
                    format!("unknown preset `{other}` (known: {})", PRESET_NAMES.join(", ")),
                ))
            }
        };
        let cfg = SyntheticConfig {
            sample_rate_hz: 256,
            seed: self.seed,
            segments: layout.iter().map(|&(e, d)| self.segment(e, d)).collect(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
