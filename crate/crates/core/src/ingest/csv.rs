//! Recording and tag CSV files.
//!
//! Recording: header `t,uv`, then `<seconds>,<microvolts>` rows, LF endings.
//! Values are written with the shortest representation that parses back to
//! the same `f64`, so write-then-read is bit-exact.
//!
//! Tags: header `t,status`, status `open` or `closed`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::{sample_is_sane, IngestError, MonotoneGuard};
use crate::eval::{EyeStatus, EyeStatusTag};
use crate::signal::Sample;

pub const RECORDING_HEADER: &str = "t,uv";
pub const TAGS_HEADER: &str = "t,status";

fn parse_number(field: &str, what: &str, line: usize) -> Result<f64, IngestError> {
    let v: f64 = field.parse().map_err(|_| IngestError::Parse {
        line,
        message: format!("`{field}` is not a decimal {what}"),
    })?;
    if !v.is_finite() {
        return Err(IngestError::Parse {
            line,
            message: format!("{what} `{field}` is not finite"),
        });
    }
    Ok(v)
}

fn parse_sample_row(row: &str, line: usize) -> Result<Sample, IngestError> {
    let mut fields = row.split(',');
    let (Some(t), Some(uv), None) = (fields.next(), fields.next(), fields.next()) else {
        return Err(IngestError::Parse {
            line,
            message: format!("expected 2 fields `t,uv`, got `{row}`"),
        });
    };
    let sample = Sample::new(parse_number(t, "time", line)?, parse_number(uv, "amplitude", line)?);
    if !sample_is_sane(&sample) {
        return Err(IngestError::Parse {
            line,
            message: format!("negative time {}", sample.t),
        });
    }
    Ok(sample)
}

fn check_header(first: Option<std::io::Result<String>>, expected: &str, path: &str) -> Result<(), IngestError> {
    match first {
        None => Err(IngestError::Parse {
            line: 1,
            message: format!("empty file, expected header `{expected}`"),
        }),
        Some(Err(e)) => Err(IngestError::io(path, e)),
        Some(Ok(h)) if h.trim_end_matches('\r') == expected => Ok(()),
        Some(Ok(h)) => Err(IngestError::Parse {
            line: 1,
            message: format!("expected header `{expected}`, got `{h}`"),
        }),
    }
}

/// Streams a recording CSV, optionally paced to `speed`× real time.
pub struct Replay {
    path: String,
    lines: Lines<BufReader<File>>,
    line: usize,
    guard: MonotoneGuard,
    speed: f64,
    clock: Option<(Instant, f64)>,
    cancel: Option<Arc<AtomicBool>>,
    failed: bool,
}

impl Replay {
    pub fn open(path: impl AsRef<Path>, speed: f64) -> Result<Self, IngestError> {
        let path_ref = path.as_ref();
        let display = path_ref.display().to_string();
        if !(speed.is_finite() && speed >= 0.0) {
            return Err(crate::ConfigError::new("speed", format!("must be >= 0, got {speed}")).into());
        }
        let file = File::open(path_ref).map_err(|e| IngestError::io(&display, e))?;
        let mut lines = BufReader::new(file).lines();
        check_header(lines.next(), RECORDING_HEADER, &display)?;
        Ok(Self {
            path: display,
            lines,
            line: 1,
            guard: MonotoneGuard::default(),
            speed,
            clock: None,
            cancel: None,
            failed: false,
        })
    }

    /// Stops the stream (with [`IngestError::Cancelled`]) once the flag is set.
    pub fn with_cancel(mut self, cancel: Arc<AtomicBool>) -> Self {
        self.cancel = Some(cancel);
        self
    }

    fn cancelled(&self) -> bool {
        self.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed))
    }

    fn pace(&mut self, t: f64) -> Result<(), IngestError> {
        if self.speed == 0.0 {
            return Ok(());
        }
        let (start, t0) = *self.clock.get_or_insert((Instant::now(), t));
        let due = start + Duration::from_secs_f64((t - t0) / self.speed);
        loop {
            if self.cancelled() {
                return Err(IngestError::Cancelled);
            }
            let now = Instant::now();
            if now >= due {
                return Ok(());
            }
            std::thread::sleep((due - now).min(Duration::from_millis(20)));
        }
    }
}

impl Iterator for Replay {
    type Item = Result<Sample, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if self.cancelled() {
            self.failed = true;
            return Some(Err(IngestError::Cancelled));
        }
        let result = loop {
            let raw = self.lines.next()?;
            self.line += 1;
            let row = match raw {
                Ok(row) => row,
                Err(e) => break Err(IngestError::io(&self.path, e)),
            };
            let row = row.trim_end_matches('\r');
            if row.is_empty() {
                continue;
            }
            break parse_sample_row(row, self.line).and_then(|s| {
                self.guard.check(&s, self.line)?;
                self.pace(s.t)?;
                Ok(s)
            });
        };
        self.failed = result.is_err();
        Some(result)
    }
}

pub fn read_recording(path: impl AsRef<Path>) -> Result<Vec<Sample>, IngestError> {
    Replay::open(path, 0.0)?.collect()
}

/// Incremental recording writer, same format as [`write_recording`].
#[derive(Debug)]
pub struct RecordingWriter {
    path: String,
    out: BufWriter<File>,
}

impl RecordingWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        let display = path.as_ref().display().to_string();
        let file = File::create(path.as_ref()).map_err(|e| IngestError::io(&display, e))?;
        let mut w = Self {
            path: display,
            out: BufWriter::new(file),
        };
        writeln!(w.out, "{RECORDING_HEADER}").map_err(|e| IngestError::io(&w.path, e))?;
        Ok(w)
    }

    pub fn push(&mut self, s: &Sample) -> Result<(), IngestError> {
        writeln!(self.out, "{},{}", s.t, s.uv).map_err(|e| IngestError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), IngestError> {
        self.out.flush().map_err(|e| IngestError::io(&self.path, e))
    }
}

pub fn write_recording<'a>(
    path: impl AsRef<Path>,
    samples: impl IntoIterator<Item = &'a Sample>,
) -> Result<(), IngestError> {
    let mut w = RecordingWriter::create(path)?;
    for s in samples {
        w.push(s)?;
    }
    w.finish()
}

pub fn read_tags(path: impl AsRef<Path>) -> Result<Vec<EyeStatusTag>, IngestError> {
    let display = path.as_ref().display().to_string();
    let file = File::open(path.as_ref()).map_err(|e| IngestError::io(&display, e))?;
    let mut lines = BufReader::new(file).lines();
    check_header(lines.next(), TAGS_HEADER, &display)?;
    let mut tags: Vec<EyeStatusTag> = Vec::new();
    for (i, row) in lines.enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| IngestError::io(&display, e))?;
        let row = row.trim_end_matches('\r');
        if row.is_empty() {
            continue;
        }
        let Some((t, status)) = row.split_once(',') else {
            return Err(IngestError::Parse {
                line,
                message: format!("expected `t,status`, got `{row}`"),
            });
        };
        let t = parse_number(t, "time", line)?;
        let status: EyeStatus = status
            .parse()
            .map_err(|message| IngestError::Parse { line, message })?;
        if let Some(prev) = tags.last() {
            if t <= prev.t {
                return Err(IngestError::NonMonotone {
                    line,
                    prev: prev.t,
                    t,
                });
            }
        }
        tags.push(EyeStatusTag { t, status });
    }
    Ok(tags)
}

pub fn write_tags(path: impl AsRef<Path>, tags: &[EyeStatusTag]) -> Result<(), IngestError> {
    let display = path.as_ref().display().to_string();
    let file = File::create(path.as_ref()).map_err(|e| IngestError::io(&display, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| IngestError::io(&display, e);
    writeln!(w, "{TAGS_HEADER}").map_err(io)?;
    for tag in tags {
        writeln!(w, "{},{}", tag.t, tag.status.as_str()).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file_with(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_rows_bit_exact() {
        let f = file_with("t,uv\n0,1.5\n0.00390625,-2.25\n0.0078125,0.1\n");
        let s = read_recording(f.path()).unwrap();
        assert_eq!(
            s,
            vec![
                Sample::new(0.0, 1.5),
                Sample::new(0.00390625, -2.25),
                Sample::new(0.0078125, 0.1)
            ]
        );
    }

    #[test]
    fn malformed_row_names_line() {
        let f = file_with("t,uv\n0,1\nabc,1.0\n");
        let err = read_recording(f.path()).unwrap_err();
        assert!(matches!(err, IngestError::Parse { line: 3, .. }), "{err}");
        assert!(err.to_string().starts_with("line 3"));
    }

    #[test]
    fn rejects_nan_and_extra_fields() {
        let f = file_with("t,uv\n0,NaN\n");
        assert!(matches!(
            read_recording(f.path()),
            Err(IngestError::Parse { line: 2, .. })
        ));
        let f = file_with("t,uv\n0,1,2\n");
        assert!(read_recording(f.path()).is_err());
    }

    #[test]
    fn non_monotone_is_fatal() {
        let f = file_with("t,uv\n0.5,1\n0.25,1\n");
        assert!(matches!(
            read_recording(f.path()),
            Err(IngestError::NonMonotone { line: 3, .. })
        ));
    }

    #[test]
    fn header_required() {
        let f = file_with("0,1\n");
        assert!(matches!(
            read_recording(f.path()),
            Err(IngestError::Parse { line: 1, .. })
        ));
        let f = file_with("");
        assert!(read_recording(f.path()).is_err());
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_recording("/no/such/rec.csv").unwrap_err();
        assert!(err.to_string().contains("/no/such/rec.csv"));
    }

    #[test]
    fn paced_replay_takes_real_time() {
        let f = file_with("t,uv\n0,0\n0.1,0\n0.2,0\n");
        let start = Instant::now();
        let n = Replay::open(f.path(), 2.0).unwrap().count();
        assert_eq!(n, 3);
        assert!(start.elapsed() >= Duration::from_millis(95));
    }

    #[test]
    fn cancel_stops_replay() {
        let f = file_with("t,uv\n0,0\n100,0\n");
        let flag = Arc::new(AtomicBool::new(false));
        let mut r = Replay::open(f.path(), 1.0).unwrap().with_cancel(flag.clone());
        assert!(r.next().unwrap().is_ok());
        flag.store(true, Ordering::Relaxed);
        assert!(matches!(r.next(), Some(Err(IngestError::Cancelled))));
        assert!(r.next().is_none());
    }

    #[test]
    fn tags_round_trip() {
        let tags = vec![
            EyeStatusTag {
                t: 0.0,
                status: EyeStatus::Closed,
            },
            EyeStatusTag {
                t: 30.0,
                status: EyeStatus::Open,
            },
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_tags(f.path(), &tags).unwrap();
        assert_eq!(
            std::fs::read_to_string(f.path()).unwrap(),
            "t,status\n0,closed\n30,open\n"
        );
        assert_eq!(read_tags(f.path()).unwrap(), tags);
    }

    #[test]
    fn bad_tag_status() {
        let f = file_with("t,status\n0,Open\n");
        assert!(matches!(
            read_tags(f.path()),
            Err(IngestError::Parse { line: 2, .. })
        ));
    }
}
