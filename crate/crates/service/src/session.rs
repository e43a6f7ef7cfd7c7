//! One running session: a source thread feeding a pipeline thread, with the
//! shared state (record file, phase, tags, fan-out) behind one mutex.
//!
//! Every event is written to the record file and broadcast while the lock is
//! held, so the file, every subscriber and the tag clock agree on one order.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde::Serialize;
use tokio::sync::broadcast;
use vigil_core::engine::{BaselineProfile, SessionPhase};
use vigil_core::event::EndedEvent;
use vigil_core::ingest::{IngestError, NetworkListener, RecordingWriter, Replay, Synthesizer};
use vigil_core::pipeline::TagFeed;
use vigil_core::record::{RecordWriter, SessionMeta};
use vigil_core::{EyeStatus, EyeStatusTag, Pipeline, Sample, SessionEvent};

use crate::error::ServiceError;

/// One serialized event as sent to live subscribers.
#[derive(Debug, Clone)]
pub struct Frame {
    pub json: Arc<str>,
    pub is_end: bool,
}

impl Frame {
    fn new(event: &SessionEvent) -> Self {
        Self {
            json: serde_json::to_string(event).expect("event serializes").into(),
            is_end: event.is_ended(),
        }
    }
}

/// What a new subscriber sees: the current phase, the end (if already
/// reached), and every event after that point.
#[derive(Debug)]
pub struct Subscription {
    pub snapshot: SessionEvent,
    pub ended: Option<EndedEvent>,
    pub rx: broadcast::Receiver<Frame>,
}

/// Response of `GET /sessions/{id}` and `POST /sessions/{id}/stop`.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SessionStatus {
    pub meta: SessionMeta,
    pub phase: SessionPhase,
    pub verdicts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ended: Option<EndedEvent>,
}

#[derive(Debug)]
struct State {
    writer: Option<RecordWriter>,
    phase: SessionPhase,
    last_t: Option<f64>,
    last_tag_t: Option<f64>,
    verdicts: usize,
    baseline: Option<BaselineProfile>,
    ended: Option<EndedEvent>,
    write_error: Option<String>,
}

#[derive(Debug)]
pub struct SessionHandle {
    meta: SessionMeta,
    state: Mutex<State>,
    tx: broadcast::Sender<Frame>,
    stop: Arc<AtomicBool>,
    skipped: Arc<AtomicU64>,
    workers: Mutex<Vec<JoinHandle<()>>>,
}

/// A source opened (and so validated) before the session is created.
// Built once per session; boxing would buy nothing.
#[allow(clippy::large_enum_variant)]
pub(crate) enum OpenedSource {
    Replay(Replay),
    Synthetic { synth: Synthesizer, speed: f64 },
    Network(NetworkListener),
}

pub(crate) struct Launch {
    pub meta: SessionMeta,
    pub writer: RecordWriter,
    pub source: OpenedSource,
    pub tags: Vec<EyeStatusTag>,
    pub pipeline: Pipeline,
    pub raw: Option<RecordingWriter>,
    pub broadcast_capacity: usize,
    pub channel_capacity: usize,
}

enum Msg {
    Sample(Sample),
    Failed(String),
}

impl SessionHandle {
    pub(crate) fn launch(l: Launch) -> Arc<Self> {
        let (tx, _) = broadcast::channel(l.broadcast_capacity.max(1));
        let handle = Arc::new(Self {
            meta: l.meta,
            state: Mutex::new(State {
                writer: Some(l.writer),
                phase: l.pipeline.phase(),
                last_t: None,
                last_tag_t: None,
                verdicts: 0,
                baseline: None,
                ended: None,
                write_error: None,
            }),
            tx,
            stop: Arc::new(AtomicBool::new(false)),
            skipped: Arc::new(AtomicU64::new(0)),
            workers: Mutex::new(Vec::new()),
        });
        {
            let mut st = handle.lock();
            let phase = st.phase;
            handle.emit(&mut st, SessionEvent::Phase(phase));
        }

        let live = matches!(l.source, OpenedSource::Network(_));
        let (sample_tx, sample_rx) = mpsc::sync_channel(l.channel_capacity.max(1));
        let overflow = Arc::new(AtomicBool::new(false));

        let src = {
            let stop = handle.stop.clone();
            let skipped = handle.skipped.clone();
            let overflow = overflow.clone();
            let source = l.source;
            std::thread::spawn(move || source_loop(source, sample_tx, live, stop, skipped, overflow))
        };
        let pipe = {
            let h = handle.clone();
            let feed = TagFeed::new(l.tags);
            let pipeline = l.pipeline;
            let raw = l.raw;
            std::thread::spawn(move || h.pipeline_loop(sample_rx, pipeline, feed, raw, overflow))
        };
        handle.workers.lock().unwrap().extend([src, pipe]);
        handle
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn id(&self) -> &str {
        &self.meta.session_id
    }

    /// Metadata with the current skip count.
    pub fn meta(&self) -> SessionMeta {
        let mut meta = self.meta.clone();
        meta.skip_count = self.skipped.load(Ordering::Relaxed);
        meta
    }

    pub fn is_ended(&self) -> bool {
        self.lock().ended.is_some()
    }

    pub fn status(&self) -> SessionStatus {
        let st = self.lock();
        SessionStatus {
            meta: self.meta(),
            phase: st.phase,
            verdicts: st.verdicts,
            baseline: st.baseline,
            ended: st.ended.clone(),
        }
    }

    pub fn subscribe(&self) -> Subscription {
        let st = self.lock();
        Subscription {
            snapshot: SessionEvent::Phase(st.phase),
            ended: st.ended.clone(),
            rx: self.tx.subscribe(),
        }
    }

    /// Records an eye-status tag at the current sample time.
    pub fn tag(&self, status: EyeStatus) -> Result<EyeStatusTag, ServiceError> {
        let mut st = self.lock();
        if st.ended.is_some() {
            return Err(ServiceError::Conflict(format!(
                "session `{}` has ended",
                self.id()
            )));
        }
        let t = st.last_t.unwrap_or(0.0);
        if let Some(prev) = st.last_tag_t {
            if t <= prev {
                return Err(ServiceError::Conflict(format!(
                    "tag time {t} does not follow previous tag at {prev}"
                )));
            }
        }
        let tag = EyeStatusTag { t, status };
        self.emit(&mut st, SessionEvent::Tag(tag));
        Ok(tag)
    }

    /// Ends the session: writes `Ended(requested)`, seals the record and
    /// stops the source. Returns once both worker threads have exited.
    pub fn stop(&self) -> Result<SessionStatus, ServiceError> {
        {
            let mut st = self.lock();
            if st.ended.is_some() {
                return Err(ServiceError::Conflict(format!(
                    "session `{}` has already ended",
                    self.id()
                )));
            }
            let ended = EndedEvent::requested(self.skipped.load(Ordering::Relaxed));
            self.finish(&mut st, ended);
            self.stop.store(true, Ordering::SeqCst);
        }
        self.join();
        Ok(self.status())
    }

    /// Waits for the worker threads.
    pub fn join(&self) {
        let workers: Vec<_> = self.workers.lock().unwrap().drain(..).collect();
        for w in workers {
            let _ = w.join();
        }
    }

    pub(crate) fn cancel(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    fn emit(&self, st: &mut State, event: SessionEvent) {
        if st.ended.is_some() {
            return;
        }
        if let Some(w) = st.writer.as_mut() {
            if let Err(e) = w.append(&event) {
                st.write_error = Some(e.to_string());
                st.writer = None;
            }
        }
        match &event {
            SessionEvent::Phase(p) => st.phase = *p,
            SessionEvent::Baseline(b) => st.baseline = Some(b.profile),
            SessionEvent::Epoch(_) => st.verdicts += 1,
            SessionEvent::Tag(t) => st.last_tag_t = Some(t.t),
            SessionEvent::Ended(_) => {}
        }
        // No receivers is not an error.
        let _ = self.tx.send(Frame::new(&event));
    }

    fn finish(&self, st: &mut State, mut ended: EndedEvent) {
        if st.ended.is_some() {
            return;
        }
        if let Some(e) = st.write_error.take() {
            ended = EndedEvent::error(format!("record file: {e}"), ended.skip_count);
        }
        self.emit(st, SessionEvent::Ended(ended.clone()));
        st.ended = Some(ended);
        if let Some(w) = st.writer.take() {
            let _ = w.seal();
        }
    }

    fn pipeline_loop(
        &self,
        rx: Receiver<Msg>,
        mut pipeline: Pipeline,
        mut feed: TagFeed,
        mut raw: Option<RecordingWriter>,
        overflow: Arc<AtomicBool>,
    ) {
        let outcome: Result<(), String> = loop {
            let sample = match rx.recv() {
                Err(_) => break Ok(()),
                Ok(Msg::Failed(e)) => break Err(e),
                Ok(Msg::Sample(s)) => s,
            };
            if self.stop.load(Ordering::SeqCst) {
                break Ok(());
            }
            if overflow.swap(false, Ordering::SeqCst) {
                pipeline.mark_gap();
            }
            if let Some(w) = raw.as_mut() {
                if let Err(e) = w.push(&sample) {
                    break Err(format!("raw recording: {e}"));
                }
            }
            let tags = feed.due(sample.t);
            let events = match pipeline.push(sample) {
                Ok(ev) => ev,
                Err(e) => break Err(e.to_string()),
            };
            let mut st = self.lock();
            if st.ended.is_some() {
                break Ok(());
            }
            st.last_t = Some(sample.t);
            for tag in tags {
                if st.last_tag_t.is_none_or(|prev| tag.t > prev) {
                    self.emit(&mut st, SessionEvent::Tag(tag));
                }
            }
            for ev in events {
                self.emit(&mut st, ev);
            }
        };
        drop(rx);
        // The raw file is complete before Ended becomes visible.
        let raw_result = raw.map(RecordingWriter::finish).transpose();
        let mut st = self.lock();
        for tag in feed.drain() {
            if st.last_tag_t.is_none_or(|prev| tag.t > prev) {
                self.emit(&mut st, SessionEvent::Tag(tag));
            }
        }
        let skips = self.skipped.load(Ordering::Relaxed);
        let ended = match (outcome, raw_result) {
            (Err(e), _) => EndedEvent::error(e, skips),
            (Ok(()), Err(e)) => EndedEvent::error(format!("raw recording: {e}"), skips),
            (Ok(()), Ok(_)) => EndedEvent::exhausted(skips),
        };
        self.finish(&mut st, ended);
    }
}

fn source_loop(
    source: OpenedSource,
    tx: SyncSender<Msg>,
    live: bool,
    stop: Arc<AtomicBool>,
    skipped: Arc<AtomicU64>,
    overflow: Arc<AtomicBool>,
) {
    let mut counter = None;
    let iter: Box<dyn Iterator<Item = Result<Sample, IngestError>>> = match source {
        OpenedSource::Replay(r) => Box::new(r.with_cancel(stop.clone())),
        OpenedSource::Synthetic { synth, speed } => Box::new(Paced::new(synth, speed, stop.clone())),
        OpenedSource::Network(listener) => match listener.accept(Some(stop.clone())) {
            Ok(src) => {
                // Mirror the source's counter so skips are visible live.
                let c = src.skip_counter();
                counter = Some(c.clone());
                let skipped = skipped.clone();
                Box::new(src.inspect(move |_| skipped.store(c.load(Ordering::Relaxed), Ordering::Relaxed)))
            }
            Err(IngestError::Cancelled) => return,
            Err(e) => {
                let _ = tx.send(Msg::Failed(e.to_string()));
                return;
            }
        },
    };
    forward(iter, &tx, live, &stop, &overflow);
    // Skips found at end of stream; stored before `tx` drops so the
    // pipeline sees the final count when it writes Ended.
    if let Some(c) = counter {
        skipped.store(c.load(Ordering::Relaxed), Ordering::Relaxed);
    }
}

fn forward(
    iter: impl Iterator<Item = Result<Sample, IngestError>>,
    tx: &SyncSender<Msg>,
    live: bool,
    stop: &AtomicBool,
    overflow: &AtomicBool,
) {
    for item in iter {
        if stop.load(Ordering::SeqCst) {
            return;
        }
        match item {
            Ok(s) if live => match tx.try_send(Msg::Sample(s)) {
                Ok(()) => {}
                Err(TrySendError::Full(_)) => overflow.store(true, Ordering::SeqCst),
                Err(TrySendError::Disconnected(_)) => return,
            },
            Ok(s) => {
                if tx.send(Msg::Sample(s)).is_err() {
                    return;
                }
            }
            Err(IngestError::Cancelled) => return,
            Err(e) => {
                let _ = tx.send(Msg::Failed(e.to_string()));
                return;
            }
        }
    }
}

/// Paces a synthetic stream to `speed`× real time; 0 runs unpaced.
struct Paced {
    inner: Synthesizer,
    speed: f64,
    start: Option<(Instant, f64)>,
    stop: Arc<AtomicBool>,
}

impl Paced {
    fn new(inner: Synthesizer, speed: f64, stop: Arc<AtomicBool>) -> Self {
        Self {
            inner,
            speed,
            start: None,
            stop,
        }
    }
}

impl Iterator for Paced {
    type Item = Result<Sample, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let item = self.inner.next()?;
        if self.speed > 0.0 {
            if let Ok(s) = &item {
                let (t0, s0) = *self.start.get_or_insert((Instant::now(), s.t));
                let due = t0 + Duration::from_secs_f64((s.t - s0) / self.speed);
                loop {
                    if self.stop.load(Ordering::Relaxed) {
                        return Some(Err(IngestError::Cancelled));
                    }
                    let now = Instant::now();
                    if now >= due {
                        break;
                    }
                    std::thread::sleep((due - now).min(Duration::from_millis(20)));
                }
            }
        }
        Some(item)
    }
}
