use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use vigil_core::eval::{ConfusionMatrix, SessionReport};
use vigil_core::ingest::{
    read_tags, synthesize, NetworkListener, RecordingWriter, Replay, SourceSpec,
};
use vigil_core::record::{load_session, RecordWriter, SessionMeta};
use vigil_core::{EyeStatus, EyeStatusTag, Pipeline};

use crate::error::ServiceError;
use crate::request::StartRequest;
use crate::session::{Launch, OpenedSource, SessionHandle, SessionStatus, Subscription};

pub const DATA_DIR_ENV: &str = "VIGIL_DATA_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Live (not yet ended) sessions allowed at once.
    pub max_sessions: usize,
    /// Events buffered per live subscriber before it is disconnected.
    pub broadcast_capacity: usize,
    /// Samples buffered between a session's source and its pipeline.
    pub channel_capacity: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("./data"),
            max_sessions: 16,
            broadcast_capacity: 1024,
            channel_capacity: 4096,
        }
    }
}

impl ServiceConfig {
    /// Defaults, with the data directory taken from `VIGIL_DATA_DIR` if set.
    pub fn from_env() -> Self {
        let mut cfg = Self::default();
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV).filter(|d| !d.is_empty()) {
            cfg.data_dir = PathBuf::from(dir);
        }
        cfg
    }

    pub fn with_data_dir(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            ..Self::default()
        }
    }
}

/// Response of `GET /sessions/{id}/report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportResponse {
    pub report: SessionReport,
    pub confusion: ConfusionMatrix,
}

/// Session registry and the operations behind the HTTP API.
#[derive(Debug)]
pub struct Service {
    cfg: ServiceConfig,
    sessions: Mutex<HashMap<String, Arc<SessionHandle>>>,
}

impl Service {
    pub fn new(cfg: ServiceConfig) -> Result<Self, ServiceError> {
        std::fs::create_dir_all(&cfg.data_dir).map_err(|e| {
            ServiceError::Internal(format!("{}: {e}", cfg.data_dir.display()))
        })?;
        Ok(Self {
            cfg,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.cfg
    }

    fn registry(&self) -> MutexGuard<'_, HashMap<String, Arc<SessionHandle>>> {
        self.sessions.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn record_path(&self, session_id: &str) -> PathBuf {
        self.cfg.data_dir.join(format!("{session_id}.jsonl"))
    }

    pub fn raw_path(&self, session_id: &str) -> PathBuf {
        self.cfg.data_dir.join(format!("{session_id}.raw.csv"))
    }

    pub fn start_session(&self, req: StartRequest) -> Result<SessionMeta, ServiceError> {
        let pipeline = Pipeline::new(req.epoch_cfg, req.calib_cfg)?;
        let mut source = req.source.resolve()?;
        let record_raw = req.record_raw.unwrap_or(source.is_live());

        let (opened, tags, seed) = match &mut source {
            SourceSpec::Replay { path, speed, tags } => {
                let replay = Replay::open(&*path, *speed).map_err(source_err)?;
                let tags = match tags {
                    Some(p) => read_tags(&*p).map_err(source_err)?,
                    None => Vec::new(),
                };
                (OpenedSource::Replay(replay), tags, None)
            }
            SourceSpec::Synthetic { config, speed } => {
                if !(speed.is_finite() && *speed >= 0.0) {
                    return Err(ServiceError::Invalid(format!(
                        "invalid `speed`: must be >= 0, got {speed}"
                    )));
                }
                if config.sample_rate_hz != req.epoch_cfg.sample_rate_hz {
                    return Err(ServiceError::Invalid(format!(
                        "invalid `sample_rate_hz`: synthetic source runs at {} Hz, epoch config expects {} Hz",
                        config.sample_rate_hz, req.epoch_cfg.sample_rate_hz
                    )));
                }
                let synth = synthesize(config)?;
                let opened = OpenedSource::Synthetic {
                    synth,
                    speed: *speed,
                };
                (opened, config.ground_truth_tags(), Some(config.seed))
            }
            SourceSpec::Network { listen } => {
                let listener = NetworkListener::bind(listen.as_str()).map_err(source_err)?;
                *listen = listener.local_addr().to_string();
                (OpenedSource::Network(listener), Vec::new(), None)
            }
        };

        let mut registry = self.registry();
        let live = registry.values().filter(|h| !h.is_ended()).count();
        if live >= self.cfg.max_sessions {
            return Err(ServiceError::Conflict(format!(
                "capacity: {live} live sessions (limit {})",
                self.cfg.max_sessions
            )));
        }
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let meta = SessionMeta {
            session_id: session_id.clone(),
            created_at: Some(chrono::Utc::now().to_rfc3339()),
            source,
            epoch_cfg: req.epoch_cfg,
            calib_cfg: req.calib_cfg,
            mode: req.mode,
            seed,
            skip_count: 0,
            record_raw,
        };
        let writer = RecordWriter::create(self.record_path(&session_id), &meta)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        let raw = if record_raw {
            Some(
                RecordingWriter::create(self.raw_path(&session_id))
                    .map_err(|e| ServiceError::Internal(e.to_string()))?,
            )
        } else {
            None
        };
        let handle = SessionHandle::launch(Launch {
            meta: meta.clone(),
            writer,
            source: opened,
            tags,
            pipeline,
            raw,
            broadcast_capacity: self.cfg.broadcast_capacity,
            channel_capacity: self.cfg.channel_capacity,
        });
        registry.insert(session_id, handle);
        Ok(meta)
    }

    pub fn session(&self, session_id: &str) -> Result<Arc<SessionHandle>, ServiceError> {
        self.registry()
            .get(session_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(session_id.to_string()))
    }

    pub fn list(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.registry().keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn status(&self, session_id: &str) -> Result<SessionStatus, ServiceError> {
        Ok(self.session(session_id)?.status())
    }

    pub fn record_tag(&self, session_id: &str, status: EyeStatus) -> Result<EyeStatusTag, ServiceError> {
        self.session(session_id)?.tag(status)
    }

    /// Blocks until the session's threads have exited.
    pub fn stop_session(&self, session_id: &str) -> Result<SessionStatus, ServiceError> {
        self.session(session_id)?.stop()
    }

    pub fn subscribe(&self, session_id: &str) -> Result<Subscription, ServiceError> {
        Ok(self.session(session_id)?.subscribe())
    }

    /// Scores an ended session from its record file. Sessions from earlier
    /// runs of the service are found in the data directory.
    pub fn report(&self, session_id: &str) -> Result<ReportResponse, ServiceError> {
        let path = match self.registry().get(session_id) {
            Some(h) if !h.is_ended() => {
                return Err(ServiceError::Conflict(format!(
                    "session `{session_id}` is still running"
                )))
            }
            Some(_) => self.record_path(session_id),
            None => {
                let path = self.record_path(session_id);
                if !is_plain_id(session_id) || !path.is_file() {
                    return Err(ServiceError::NotFound(session_id.to_string()));
                }
                path
            }
        };
        report_from_file(&path)
    }

    /// Stops every live session (used on shutdown).
    pub fn shutdown(&self) {
        let handles: Vec<_> = self.registry().values().cloned().collect();
        for h in &handles {
            if !h.is_ended() {
                let _ = h.stop();
            }
            h.cancel();
            h.join();
        }
    }
}

fn source_err(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Source(e.to_string())
}

fn is_plain_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn report_from_file(path: &Path) -> Result<ReportResponse, ServiceError> {
    let record = load_session(path).map_err(|e| ServiceError::Internal(e.to_string()))?;
    if record.ended().is_none() {
        return Err(ServiceError::Conflict("session record has no end".into()));
    }
    let (report, confusion) = record
        .report()
        .map_err(|e| ServiceError::Conflict(e.to_string()))?;
    Ok(ReportResponse { report, confusion })
}
