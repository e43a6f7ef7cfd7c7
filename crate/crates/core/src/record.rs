//! Append-only session record: `<data_dir>/<session_id>.jsonl`.
//!
//! Line 1 is `{"type":"meta",...}`; every following line is one
//! [`SessionEvent`] in emission order. Each line is flushed as it is written,
//! so a crash leaves at most one truncated trailing line, which `load`
//! reports by line number.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{BaselineProfile, CalibrationConfig, EpochVerdict};
use crate::eval::{
    confusion, label_epochs, session_report, ConfusionMatrix, EvalError, EyeStatusTag,
    SessionMode, SessionReport,
};
use crate::event::{EndedEvent, SessionEvent};
use crate::ingest::SourceSpec;
use crate::signal::EpochConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    /// Wall-clock creation time (RFC 3339). Absent for offline analyses so
    /// their output stays byte-reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<String>,
    pub source: SourceSpec,
    pub epoch_cfg: EpochConfig,
    pub calib_cfg: CalibrationConfig,
    pub mode: SessionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub skip_count: u64,
    #[serde(default)]
    pub record_raw: bool,
}

#[derive(Serialize)]
struct MetaLine<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(flatten)]
    meta: &'a SessionMeta,
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("empty session file: missing meta record")]
    Empty,
    #[error("line {line}: truncated record")]
    Truncated { line: usize },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown record type `{kind}`")]
    UnknownType { line: usize, kind: String },
    #[error("line {line}: expected the meta record first")]
    MissingMeta { line: usize },
    #[error("line {line}: second meta record")]
    DuplicateMeta { line: usize },
}

const EVENT_TYPES: [&str; 5] = ["phase", "baseline", "epoch", "tag", "ended"];

/// A loaded session file.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub meta: SessionMeta,
    pub events: Vec<SessionEvent>,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("session has no eye-status tags")]
    NoTags,
    #[error("session has no labeled monitored epochs")]
    NoLabeledEpochs,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl SessionRecord {
    pub fn verdicts(&self) -> Vec<EpochVerdict> {
        self.events.iter().filter_map(|e| e.verdict().copied()).collect()
    }

    pub fn tags(&self) -> Vec<EyeStatusTag> {
        self.events.iter().filter_map(|e| e.tag().copied()).collect()
    }

    pub fn baseline(&self) -> Option<BaselineProfile> {
        self.events.iter().find_map(|e| e.baseline().copied())
    }

    pub fn ended(&self) -> Option<&EndedEvent> {
        self.events.iter().find_map(|e| match e {
            SessionEvent::Ended(end) => Some(end),
            _ => None,
        })
    }

    /// Labels the persisted verdicts with the persisted tags and scores them.
    pub fn report(&self) -> Result<(SessionReport, ConfusionMatrix), ReportError> {
        let tags = self.tags();
        if tags.is_empty() {
            return Err(ReportError::NoTags);
        }
        let labeled = label_epochs(&tags, &self.verdicts(), &self.meta.epoch_cfg)?;
        if labeled.is_empty() {
            return Err(ReportError::NoLabeledEpochs);
        }
        let report = session_report(&self.meta.session_id, self.meta.mode, &labeled)?;
        Ok((report, confusion(&labeled)))
    }

    /// Serializes the whole record in file form.
    pub fn to_jsonl(&self) -> String {
        let mut out = meta_line(&self.meta);
        for ev in &self.events {
            out.push_str(&event_line(ev));
        }
        out
    }
}

fn meta_line(meta: &SessionMeta) -> String {
    let mut s = serde_json::to_string(&MetaLine { kind: "meta", meta }).expect("meta serializes");
    s.push('\n');
    s
}

fn event_line(event: &SessionEvent) -> String {
    let mut s = serde_json::to_string(event).expect("event serializes");
    s.push('\n');
    s
}

/// Line-flushed writer for one session file.
#[derive(Debug)]
pub struct RecordWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl RecordWriter {
    /// Creates the file (failing if it exists) and writes the meta record.
    pub fn create(path: impl AsRef<Path>, meta: &SessionMeta) -> Result<Self, RecordError> {
        let path = path.as_ref().to_path_buf();
        let file = File::options()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| io_err(&path, e))?;
        let mut w = Self {
            path,
            out: BufWriter::new(file),
        };
        w.write_line(&meta_line(meta))?;
        Ok(w)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &SessionEvent) -> Result<(), RecordError> {
        self.write_line(&event_line(event))
    }

    fn write_line(&mut self, line: &str) -> Result<(), RecordError> {
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| io_err(&self.path, e))
    }

    /// Flushes and syncs; the file is complete afterwards.
    pub fn seal(mut self) -> Result<(), RecordError> {
        self.out.flush().map_err(|e| io_err(&self.path, e))?;
        self.out
            .get_ref()
            .sync_all()
            .map_err(|e| io_err(&self.path, e))
    }
}

fn io_err(path: &Path, source: std::io::Error) -> RecordError {
    RecordError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_session(path: impl AsRef<Path>, record: &SessionRecord) -> Result<(), RecordError> {
    let path = path.as_ref();
    std::fs::write(path, record.to_jsonl()).map_err(|e| io_err(path, e))
}

pub fn load_session(path: impl AsRef<Path>) -> Result<SessionRecord, RecordError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_session(&text)
}

pub fn parse_session(text: &str) -> Result<SessionRecord, RecordError> {
    if text.is_empty() {
        return Err(RecordError::Empty);
    }
    let mut meta = None;
    let mut events = Vec::new();
    let mut rest = text;
    let mut line = 0;
    while !rest.is_empty() {
        line += 1;
        let Some((raw, tail)) = rest.split_once('\n') else {
            return Err(RecordError::Truncated { line });
        };
        rest = tail;
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| RecordError::Malformed {
                line,
                message: e.to_string(),
            })?;
        let kind = value
            .get("type")
            .and_then(|t| t.as_str())
            .ok_or_else(|| RecordError::Malformed {
                line,
                message: "missing `type`".to_string(),
            })?
            .to_string();
        let malformed = |e: serde_json::Error| RecordError::Malformed {
            line,
            message: e.to_string(),
        };
        if kind == "meta" {
            if meta.is_some() {
                return Err(RecordError::DuplicateMeta { line });
            }
            let mut obj = value;
            if let Some(map) = obj.as_object_mut() {
                map.remove("type");
            }
            meta = Some(serde_json::from_value::<SessionMeta>(obj).map_err(malformed)?);
        } else if EVENT_TYPES.contains(&kind.as_str()) {
            if meta.is_none() {
                return Err(RecordError::MissingMeta { line });
            }
            events.push(serde_json::from_value::<SessionEvent>(value).map_err(malformed)?);
        } else {
            return Err(RecordError::UnknownType { line, kind });
        }
    }
    Ok(SessionRecord {
        meta: meta.ok_or(RecordError::Empty)?,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{SessionPhase, VigilanceState};
    use crate::eval::EyeStatus;

    fn meta() -> SessionMeta {
        SessionMeta {
            session_id: "s1".into(),
            created_at: Some("2026-01-01T00:00:00Z".into()),
            source: SourceSpec::Network {
                listen: "127.0.0.1:9000".into(),
            },
            epoch_cfg: EpochConfig::default(),
            calib_cfg: CalibrationConfig::default(),
            mode: SessionMode::Natural,
            seed: None,
            skip_count: 0,
            record_raw: true,
        }
    }

    fn record() -> SessionRecord {
        SessionRecord {
            meta: meta(),
            events: vec![
                SessionEvent::Phase(SessionPhase::Calibrating { completed: 0 }),
                SessionEvent::Tag(EyeStatusTag {
                    t: 0.0,
                    status: EyeStatus::Closed,
                }),
                SessionEvent::Baseline(BaselineProfile::new(0.1 + 0.2, 1.1).into()),
                SessionEvent::Phase(SessionPhase::Monitoring),
                SessionEvent::Epoch(EpochVerdict {
                    index: 6,
                    theta_bp: 1.0 / 3.0,
                    threshold: 1.1 * (0.1 + 0.2),
                    state: Some(VigilanceState::Vigilant),
                    valid: true,
                }),
                SessionEvent::Ended(EndedEvent::requested(0)),
            ],
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let r = record();
        let text = r.to_jsonl();
        assert!(text.starts_with("{\"type\":\"meta\",\"session_id\":\"s1\""));
        assert_eq!(parse_session(&text).unwrap(), r);
    }

    #[test]
    fn writer_matches_to_jsonl() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s1.jsonl");
        let r = record();
        let mut w = RecordWriter::create(&path, &r.meta).unwrap();
        for e in &r.events {
            w.append(e).unwrap();
        }
        w.seal().unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), r.to_jsonl());
        assert!(RecordWriter::create(&path, &r.meta).is_err());
        assert_eq!(load_session(&path).unwrap(), r);
    }

    #[test]
    fn truncated_tail_names_line() {
        let text = record().to_jsonl();
        let cut = &text[..text.len() - 10];
        match parse_session(cut) {
            Err(RecordError::Truncated { line }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_and_unknown() {
        assert!(matches!(parse_session(""), Err(RecordError::Empty)));
        let mut text = meta_line(&meta());
        text.push_str("{\"type\":\"alarm\"}\n");
        assert!(matches!(
            parse_session(&text),
            Err(RecordError::UnknownType { line: 2, .. })
        ));
        assert!(matches!(
            parse_session("{\"type\":\"ended\",\"reason\":\"x\"}\n"),
            Err(RecordError::MissingMeta { line: 1 })
        ));
    }

    #[test]
    fn report_from_record() {
        let (rep, m) = record().report().unwrap();
        assert_eq!(rep.n_epochs, 1);
        assert_eq!(rep.n_correct, 0);
        assert_eq!(m.count(EyeStatus::Open, EyeStatus::Closed), 1);

        let mut no_tags = record();
        no_tags.events.retain(|e| e.tag().is_none());
        assert!(matches!(no_tags.report(), Err(ReportError::NoTags)));
    }
}
