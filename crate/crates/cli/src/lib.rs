//! `vigil` command line: serve the session API, stream a recording or a
//! synthetic source through the pipeline, analyze recordings offline and
//! aggregate session files into accuracy reports.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use vigil_core::engine::CalibrationConfig;
use vigil_core::eval::{render_report, ConfusionMatrix, SessionReport};
use vigil_core::ingest::{
    read_tags, synthesize, write_tags, Preset, RecordingWriter, Replay, SourceSpec, SyntheticConfig,
};
use vigil_core::pipeline::{run_offline, run_stream};
use vigil_core::record::{load_session, write_session, SessionMeta, SessionRecord};
use vigil_core::{EpochConfig, EpochVerdict, EyeStatusTag, SessionMode, VigilanceState, WindowFn};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "vigil", version, about = "Theta-band vigilance detection from single-channel EEG")]
struct Cli {
    #[command(subcommand)]
    command: CommandArgs,
}

#[derive(Debug, Subcommand)]
enum CommandArgs {
    /// Run the HTTP/WebSocket session service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Session directory (default: $VIGIL_DATA_DIR or ./data).
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Stream a recording CSV through the pipeline, printing events as JSON lines.
    Replay {
        recording: PathBuf,
        /// Real-time multiplier; 0 runs unpaced.
        #[arg(long, default_value_t = 0.0)]
        speed: f64,
        #[arg(long)]
        tags: Option<PathBuf>,
        #[command(flatten)]
        session: SessionArgs,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Stream a synthetic source (preset name or JSON config file), printing events as JSON lines.
    Simulate {
        /// One of vigilance-demo, natural-demo, closed, open, or a path to a JSON config.
        source: String,
        #[arg(long, default_value_t = 0.0)]
        speed: f64,
        /// Preset theta amplitude in µV.
        #[arg(long)]
        amplitude: Option<f64>,
        /// Gaussian noise sigma in µV (presets).
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the generated samples as a recording CSV.
        #[arg(long)]
        write_recording: Option<PathBuf>,
        /// Also write the ground-truth eye-status tags CSV.
        #[arg(long)]
        write_tags: Option<PathBuf>,
        #[command(flatten)]
        session: SessionArgs,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Analyze a recording offline: write a verdicts CSV and print the report.
    Analyze {
        recording: PathBuf,
        #[arg(long)]
        tags: Option<PathBuf>,
        /// Verdicts CSV (default: <recording>.verdicts.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        session: SessionArgs,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Aggregate session files into a per-session accuracy table.
    Evaluate {
        files: Vec<PathBuf>,
        /// Also write the CSV export here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write the CSV export of session files.
    Report {
        files: Vec<PathBuf>,
        /// Output path (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct SessionArgs {
    /// Write the session record (JSONL) here.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Session id stored in the record (default: input file stem).
    #[arg(long)]
    session_id: Option<String>,
    #[arg(long, value_enum, default_value_t = ModeArg::Instructed)]
    mode: ModeArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Instructed,
    Natural,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum WindowArg {
    Rect,
    Hann,
}

#[derive(Debug, Args)]
struct EngineArgs {
    /// Epoch length in seconds; the method is specified for 2–10 s epochs.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(2..=10))]
    epoch_seconds: u32,
    /// Threshold = scaling × mean baseline theta power.
    #[arg(long, default_value_t = 1.1)]
    scaling: f64,
    /// Eyes-closed epochs averaged into the baseline.
    #[arg(long, default_value_t = 6)]
    baseline_epochs: usize,
    /// Band edges in Hz, inclusive.
    #[arg(long, default_value = "4:8", value_parser = parse_band)]
    band: (f64, f64),
    #[arg(long, value_enum, default_value_t = WindowArg::Rect)]
    window: WindowArg,
    #[arg(long, default_value_t = 256)]
    sample_rate: u32,
}

fn parse_band(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
    let num = |v: &str| {
        v.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("`{v}` is not a number"))
    };
    Ok((num(lo)?, num(hi)?))
}

/// Engine configuration shared by every pipeline-running command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Engine {
    pub epoch: EpochConfig,
    pub calibration: CalibrationConfig,
}

/// Session bookkeeping shared by replay, simulate and analyze.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOpts {
    pub record: Option<PathBuf>,
    pub session_id: Option<String>,
    pub mode: SessionMode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimSource {
    Preset(Preset),
    /// JSON `SyntheticConfig`; `seed` overrides the file's seed when set.
    File { path: PathBuf, seed: Option<u64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Serve {
        bind: String,
        data_dir: Option<PathBuf>,
    },
    Replay {
        recording: PathBuf,
        speed: f64,
        tags: Option<PathBuf>,
        session: SessionOpts,
        engine: Engine,
    },
    Simulate {
        source: SimSource,
        speed: f64,
        write_recording: Option<PathBuf>,
        write_tags: Option<PathBuf>,
        session: SessionOpts,
        engine: Engine,
    },
    Analyze {
        recording: PathBuf,
        tags: Option<PathBuf>,
        out: Option<PathBuf>,
        session: SessionOpts,
        engine: Engine,
    },
    Evaluate {
        files: Vec<PathBuf>,
        csv: Option<PathBuf>,
    },
    Report {
        files: Vec<PathBuf>,
        out: Option<PathBuf>,
    },
}

fn usage(message: impl std::fmt::Display) -> clap::Error {
    let mut cmd = <Cli as clap::CommandFactory>::command();
    cmd.error(ErrorKind::ValueValidation, message)
}

impl EngineArgs {
    fn build(&self) -> Result<Engine, clap::Error> {
        let epoch = EpochConfig {
            sample_rate_hz: self.sample_rate,
            epoch_seconds: self.epoch_seconds,
            window_fn: match self.window {
                WindowArg::Rect => WindowFn::Rectangular,
                WindowArg::Hann => WindowFn::Hann,
            },
            band_lo_hz: self.band.0,
            band_hi_hz: self.band.1,
        };
        let calibration = CalibrationConfig {
            baseline_epoch_count: self.baseline_epochs,
            scaling: self.scaling,
        };
        epoch.validate().map_err(usage)?;
        calibration.validate().map_err(usage)?;
        Ok(Engine { epoch, calibration })
    }
}

impl SessionArgs {
    fn build(self) -> SessionOpts {
        SessionOpts {
            record: self.record,
            session_id: self.session_id,
            mode: match self.mode {
                ModeArg::Instructed => SessionMode::Instructed,
                ModeArg::Natural => SessionMode::Natural,
            },
        }
    }
}

fn check_speed(speed: f64) -> Result<f64, clap::Error> {
    if speed.is_finite() && speed >= 0.0 {
        Ok(speed)
    } else {
        Err(usage(format!("--speed must be >= 0, got {speed}")))
    }
}

/// Parses `argv` (including the program name). Errors carry clap's exit
/// code: 2 for usage errors, 0 for `--help` and `--version`.
pub fn parse_cli<I, T>(argv: I) -> Result<Command, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    Ok(match cli.command {
        CommandArgs::Serve { bind, data_dir } => Command::Serve { bind, data_dir },
        CommandArgs::Replay {
            recording,
            speed,
            tags,
            session,
            engine,
        } => Command::Replay {
            recording,
            speed: check_speed(speed)?,
            tags,
            session: session.build(),
            engine: engine.build()?,
        },
        CommandArgs::Simulate {
            source,
            speed,
            amplitude,
            noise,
            seed,
            write_recording,
            write_tags,
            session,
            engine,
        } => {
            let source = if vigil_core::ingest::PRESET_NAMES.contains(&source.as_str()) {
                let mut preset = Preset::new(&source);
                if let Some(a) = amplitude {
                    preset.theta_amplitude_uv = a;
                }
                if let Some(n) = noise {
                    preset.noise_sigma_uv = n;
                }
                if let Some(s) = seed {
                    preset.seed = s;
                }
                preset.to_config().map_err(usage)?;
                SimSource::Preset(preset)
            } else if source.ends_with(".json") {
                if amplitude.is_some() || noise.is_some() {
                    return Err(usage("--amplitude and --noise apply to presets only"));
                }
                SimSource::File {
                    path: PathBuf::from(source),
                    seed,
                }
            } else {
                return Err(usage(format!(
                    "`{source}` is neither a preset ({}) nor a .json config",
                    vigil_core::ingest::PRESET_NAMES.join(", ")
                )));
            };
            Command::Simulate {
                source,
                speed: check_speed(speed)?,
                write_recording,
                write_tags,
                session: session.build(),
                engine: engine.build()?,
            }
        }
        CommandArgs::Analyze {
            recording,
            tags,
            out,
            session,
            engine,
        } => Command::Analyze {
            recording,
            tags,
            out,
            session: session.build(),
            engine: engine.build()?,
        },
        CommandArgs::Evaluate { files, csv } => Command::Evaluate { files, csv },
        CommandArgs::Report { files, out } => Command::Report { files, out },
    })
}

/// Runs a parsed command. Normal output goes to `out`; a runtime failure is
/// reported on `err` and yields exit code 1.
pub fn execute(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match run(cmd, out) {
        Ok(()) => EXIT_OK,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_RUNTIME
        }
    }
}

type Res<T> = Result<T, String>;

fn ctx<E: std::fmt::Display>(what: impl std::fmt::Display) -> impl FnOnce(E) -> String {
    move |e| format!("{what}: {e}")
}

fn run(cmd: Command, out: &mut dyn Write) -> Res<()> {
    match cmd {
        Command::Serve { bind, data_dir } => serve(&bind, data_dir, out),
        Command::Replay {
            recording,
            speed,
            tags,
            session,
            engine,
        } => {
            let tag_list = load_tags(tags.as_deref())?;
            let source = Replay::open(&recording, speed).map_err(|e| e.to_string())?;
            let spec = SourceSpec::Replay {
                path: recording.clone(),
                speed,
                tags,
            };
            let meta = offline_meta(&session, default_id(&recording), spec, &engine, None);
            stream_events(source, tag_list, meta, &session, &engine, out)
        }
        Command::Simulate {
            source,
            speed,
            write_recording,
            write_tags: tags_out,
            session,
            engine,
        } => {
            let (config, fallback_id) = match source {
                SimSource::Preset(p) => (p.to_config().map_err(|e| e.to_string())?, p.name.clone()),
                SimSource::File { path, seed } => {
                    let text = std::fs::read_to_string(&path).map_err(ctx(path.display()))?;
                    let mut cfg: SyntheticConfig =
                        serde_json::from_str(&text).map_err(ctx(path.display()))?;
                    if let Some(s) = seed {
                        cfg.seed = s;
                    }
                    (cfg, default_id(&path))
                }
            };
            if config.sample_rate_hz != engine.epoch.sample_rate_hz {
                return Err(format!(
                    "synthetic source runs at {} Hz but --sample-rate is {}",
                    config.sample_rate_hz, engine.epoch.sample_rate_hz
                ));
            }
            let tags = config.ground_truth_tags();
            if let Some(p) = &tags_out {
                write_tags(p, &tags).map_err(|e| e.to_string())?;
            }
            let samples = synthesize(&config).map_err(|e| e.to_string())?;
            let mut raw = match &write_recording {
                Some(p) => Some(RecordingWriter::create(p).map_err(|e| e.to_string())?),
                None => None,
            };
            let mut raw_err = None;
            let paced = pace(samples, speed).inspect(|s| {
                if let (Ok(s), Some(w)) = (s, raw.as_mut()) {
                    if let Err(e) = w.push(s) {
                        raw_err.get_or_insert(e.to_string());
                    }
                }
            });
            let seed = Some(config.seed);
            let spec = SourceSpec::Synthetic { config, speed };
            let meta = offline_meta(&session, fallback_id, spec, &engine, seed);
            stream_events(paced, tags, meta, &session, &engine, out)?;
            if let Some(e) = raw_err {
                return Err(e);
            }
            if let Some(w) = raw {
                w.finish().map_err(|e| e.to_string())?;
            }
            Ok(())
        }
        Command::Analyze {
            recording,
            tags,
            out: verdicts_path,
            session,
            engine,
        } => analyze(&recording, tags, verdicts_path, &session, &engine, out),
        Command::Evaluate { files, csv } => {
            let (reports, matrices) = score_files(&files)?;
            let rendered = render_report(&reports, &matrices);
            out.write_all(rendered.text.as_bytes()).map_err(|e| e.to_string())?;
            if let Some(p) = csv {
                std::fs::write(&p, rendered.csv).map_err(ctx(p.display()))?;
            }
            Ok(())
        }
        Command::Report { files, out: path } => {
            let (reports, _) = score_files(&files)?;
            let csv = render_report(&reports, &[]).csv;
            match path {
                Some(p) => std::fs::write(&p, csv).map_err(ctx(p.display())),
                None => out.write_all(csv.as_bytes()).map_err(|e| e.to_string()),
            }
        }
    }
}

fn default_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "session".to_string())
}

fn load_tags(path: Option<&Path>) -> Res<Vec<EyeStatusTag>> {
    match path {
        Some(p) => read_tags(p).map_err(ctx(p.display())),
        None => Ok(Vec::new()),
    }
}

fn offline_meta(
    session: &SessionOpts,
    fallback_id: String,
    source: SourceSpec,
    engine: &Engine,
    seed: Option<u64>,
) -> SessionMeta {
    SessionMeta {
        session_id: session.session_id.clone().unwrap_or(fallback_id),
        created_at: None,
        source,
        epoch_cfg: engine.epoch,
        calib_cfg: engine.calibration,
        mode: session.mode,
        seed,
        skip_count: 0,
        record_raw: false,
    }
}

fn pace<I>(samples: I, speed: f64) -> impl Iterator<Item = I::Item>
where
    I: Iterator<Item = Result<vigil_core::Sample, vigil_core::ingest::IngestError>>,
{
    let mut clock: Option<(std::time::Instant, f64)> = None;
    samples.inspect(move |s| {
        let (Ok(s), true) = (s, speed > 0.0) else { return };
        let (start, t0) = *clock.get_or_insert((std::time::Instant::now(), s.t));
        let due = start + std::time::Duration::from_secs_f64((s.t - t0) / speed);
        if let Some(wait) = due.checked_duration_since(std::time::Instant::now()) {
            std::thread::sleep(wait);
        }
    })
}

/// Streams events as JSON lines; writes the session record at the end.
fn stream_events<I, E>(
    samples: I,
    tags: Vec<EyeStatusTag>,
    meta: SessionMeta,
    session: &SessionOpts,
    engine: &Engine,
    out: &mut dyn Write,
) -> Res<()>
where
    I: IntoIterator<Item = Result<vigil_core::Sample, E>>,
    E: std::fmt::Display,
{
    let mut events = Vec::new();
    let mut write_err = None;
    run_stream(samples, tags, engine.epoch, engine.calibration, |e| {
        let line = serde_json::to_string(e).expect("event serializes");
        if let Err(err) = writeln!(out, "{line}").and_then(|_| out.flush()) {
            write_err.get_or_insert(err.to_string());
        }
        if session.record.is_some() {
            events.push(e.clone());
        }
    })
    .map_err(|e| e.to_string())?;
    if let Some(e) = write_err {
        return Err(e);
    }
    if let Some(p) = &session.record {
        write_session(p, &SessionRecord { meta, events }).map_err(|e| e.to_string())?;
    }
    Ok(())
}

pub const VERDICTS_HEADER: &str = "index,start_t,theta_bp,threshold,state,valid";

/// One row per verdict; numbers in shortest round-trip form.
pub fn write_verdicts(path: &Path, verdicts: &[EpochVerdict], cfg: &EpochConfig) -> Res<()> {
    let file = File::create(path).map_err(ctx(path.display()))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "{VERDICTS_HEADER}")?;
        for v in verdicts {
            let state = match v.state {
                Some(VigilanceState::Vigilant) => "vigilant",
                Some(VigilanceState::NonVigilant) => "nonvigilant",
                None => "",
            };
            writeln!(
                w,
                "{},{},{},{},{},{}",
                v.index,
                cfg.epoch_start(v.index),
                v.theta_bp,
                v.threshold,
                state,
                v.valid
            )?;
        }
        w.flush()
    };
    body().map_err(ctx(path.display()))
}

fn analyze(
    recording: &Path,
    tags: Option<PathBuf>,
    verdicts_path: Option<PathBuf>,
    session: &SessionOpts,
    engine: &Engine,
    out: &mut dyn Write,
) -> Res<()> {
    let tag_list = load_tags(tags.as_deref())?;
    let source = Replay::open(recording, 0.0).map_err(|e| e.to_string())?;
    let events = run_offline(source, tag_list.clone(), engine.epoch, engine.calibration)
        .map_err(ctx(recording.display()))?;
    let spec = SourceSpec::Replay {
        path: recording.to_path_buf(),
        speed: 0.0,
        tags,
    };
    let meta = offline_meta(session, default_id(recording), spec, engine, None);
    let record = SessionRecord { meta, events };

    let verdicts = record.verdicts();
    let verdicts_path = verdicts_path.unwrap_or_else(|| recording.with_extension("verdicts.csv"));
    write_verdicts(&verdicts_path, &verdicts, &engine.epoch)?;
    if let Some(p) = &session.record {
        write_session(p, &record).map_err(|e| e.to_string())?;
    }

    let mut text = String::new();
    use std::fmt::Write as _;
    let invalid = verdicts.iter().filter(|v| !v.valid).count();
    let _ = writeln!(text, "recording: {}", recording.display());
    match record.baseline() {
        Some(b) => {
            let _ = writeln!(
                text,
                "baseline: mean theta power {} uV^2, threshold {} uV^2",
                b.mean_theta_bp(),
                b.threshold()
            );
        }
        None => {
            let _ = writeln!(text, "baseline: not reached");
        }
    }
    let _ = writeln!(text, "verdicts: {} ({invalid} invalid) -> {}", verdicts.len(), verdicts_path.display());
    if tag_list.is_empty() {
        let _ = writeln!(text, "no tags given: accuracy not computed");
    } else {
        let (rep, matrix) = record.report().map_err(|e| e.to_string())?;
        let label = rep.session_id.clone();
        text.push('\n');
        text.push_str(&render_report(&[rep], &[(label, matrix)]).text);
    }
    out.write_all(text.as_bytes()).map_err(|e| e.to_string())
}

/// Loads and scores every file; matrices are pooled per mode, in
/// instructed, natural order.
type Scored = (Vec<SessionReport>, Vec<(String, ConfusionMatrix)>);

fn score_files(files: &[PathBuf]) -> Res<Scored> {
    if files.is_empty() {
        return Err("no session files given".to_string());
    }
    let mut reports = Vec::new();
    let mut pooled: [Option<ConfusionMatrix>; 2] = [None, None];
    for f in files {
        let record = load_session(f).map_err(ctx(f.display()))?;
        let (rep, m) = record.report().map_err(ctx(f.display()))?;
        let slot = &mut pooled[rep.mode as usize];
        *slot = Some(match slot.take() {
            Some(acc) => acc.merge(&m),
            None => m,
        });
        reports.push(rep);
    }
    let matrices = [SessionMode::Instructed, SessionMode::Natural]
        .into_iter()
        .zip(pooled)
        .filter_map(|(mode, m)| m.map(|m| (mode.as_str().to_string(), m)))
        .collect();
    Ok((reports, matrices))
}

fn serve(bind: &str, data_dir: Option<PathBuf>, out: &mut dyn Write) -> Res<()> {
    let mut cfg = vigil_service::ServiceConfig::from_env();
    if let Some(d) = data_dir {
        cfg.data_dir = d;
    }
    let data_dir = cfg.data_dir.clone();
    let service = Arc::new(vigil_service::Service::new(cfg).map_err(|e| e.to_string())?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind).await.map_err(ctx(bind))?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        let _ = writeln!(out, "listening on http://{addr} (data: {})", data_dir.display());
        let _ = out.flush();
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        vigil_service::serve(listener, service, shutdown)
            .await
            .map_err(|e| e.to_string())
    })
}
