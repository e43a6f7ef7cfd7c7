use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use vigil_core::engine::CalibrationConfig;
use vigil_core::ingest::{Preset, SourceSpec};
use vigil_core::{ConfigError, EpochConfig, EyeStatus, SessionMode};

/// Body of `POST /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRequest {
    pub source: SourceRequest,
    #[serde(default)]
    pub epoch_cfg: EpochConfig,
    #[serde(default)]
    pub calib_cfg: CalibrationConfig,
    #[serde(default)]
    pub mode: SessionMode,
    /// Persist raw samples to `<id>.raw.csv`. Defaults to true for network
    /// sources and false otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_raw: Option<bool>,
}

impl StartRequest {
    pub fn new(source: impl Into<SourceRequest>) -> Self {
        Self {
            source: source.into(),
            epoch_cfg: EpochConfig::default(),
            calib_cfg: CalibrationConfig::default(),
            mode: SessionMode::default(),
            record_raw: None,
        }
    }
}

/// A [`SourceSpec`], or `{"kind":"preset","name":...}` naming a built-in
/// synthetic preset.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceRequest {
    Spec(SourceSpec),
    Preset { preset: Preset, speed: f64 },
}

impl From<SourceSpec> for SourceRequest {
    fn from(spec: SourceSpec) -> Self {
        SourceRequest::Spec(spec)
    }
}

impl SourceRequest {
    pub fn resolve(self) -> Result<SourceSpec, ConfigError> {
        match self {
            SourceRequest::Spec(spec) => Ok(spec),
            SourceRequest::Preset { preset, speed } => Ok(SourceSpec::Synthetic {
                config: preset.to_config()?,
                speed,
            }),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PresetWire {
    #[serde(flatten)]
    preset: Preset,
    #[serde(default)]
    speed: f64,
}

impl Serialize for SourceRequest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            SourceRequest::Spec(spec) => spec.serialize(s),
            SourceRequest::Preset { preset, speed } => {
                let mut v = serde_json::to_value(PresetWire {
                    preset: preset.clone(),
                    speed: *speed,
                })
                .map_err(serde::ser::Error::custom)?;
                v["kind"] = "preset".into();
                v.serialize(s)
            }
        }
    }
}

impl<'de> Deserialize<'de> for SourceRequest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let mut v = serde_json::Value::deserialize(d)?;
        if v.get("kind").and_then(|k| k.as_str()) == Some("preset") {
            if let Some(map) = v.as_object_mut() {
                map.remove("kind");
            }
            let w: PresetWire = serde_json::from_value(v).map_err(D::Error::custom)?;
            Ok(SourceRequest::Preset {
                preset: w.preset,
                speed: w.speed,
            })
        } else {
            serde_json::from_value(v)
                .map(SourceRequest::Spec)
                .map_err(D::Error::custom)
        }
    }
}

/// Body of `POST /sessions/{id}/tags`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TagRequest {
    pub status: EyeStatus,
}
