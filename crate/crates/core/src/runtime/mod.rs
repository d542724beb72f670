//! Night analysis pipeline and per-clip benchmark.

mod bench;

use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{load_model, probability, DetectorModel, InputDims};
use crate::error::{Error, Result};
use crate::estimator::{load_ahi_model, night_report, AhiModel, NightReport, WindowScore, DEFAULT_THETA};
use crate::video_io::{open_night, MemorySource, NightRecord};
use crate::windowing::{build_windows, Clip, WindowPlan};

pub use bench::{bench_clip_night, benchmark, peak_resident_bytes, BenchReport, MeanSd, REFERENCE_8H_S, REFERENCE_TOTAL_S};

/// Clips of an 8-hour night at the default plan.
pub const CLIPS_PER_8H: usize = 959;
pub const THREADS_ENV: &str = "SLACTION_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub plan: WindowPlan,
    pub model_path: PathBuf,
    pub ahi_model_path: PathBuf,
    pub theta: f64,
    pub realtime: bool,
    /// Playback speed in real-time mode; 1.0 paces frames at the source rate.
    pub speed: f64,
    /// Upper bound on frames held by the reader.
    pub max_buffer_frames: usize,
}

impl PipelineConfig {
    pub fn new(model_path: impl Into<PathBuf>, ahi_model_path: impl Into<PathBuf>) -> Self {
        Self {
            plan: WindowPlan::default(),
            model_path: model_path.into(),
            ahi_model_path: ahi_model_path.into(),
            theta: DEFAULT_THETA,
            realtime: false,
            speed: 1.0,
            max_buffer_frames: 600,
        }
    }

    pub fn validate(&self, source_fps: f64) -> Result<()> {
        self.plan.validate(source_fps)?;
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::Config(format!("theta must lie in [0, 1], got {}", self.theta)));
        }
        if !(self.speed.is_finite() && self.speed > 0.0) {
            return Err(Error::Config(format!("speed must be positive, got {}", self.speed)));
        }
        let need = self.plan.frames_per_window(source_fps);
        if self.max_buffer_frames < need {
            return Err(Error::Config(format!(
                "max_buffer_frames {} is below the {need} frames of one window",
                self.max_buffer_frames
            )));
        }
        Ok(())
    }
}

/// How frames reach the detector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Producer and consumer threads joined by a one-clip queue.
    Streaming,
    /// Every frame loaded up front, clips scored in parallel.
    Batch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub report: NightReport,
    pub scores: Vec<WindowScore>,
    /// Most frames the reader held at once.
    pub peak_buffered: usize,
}

/// Checks that the detector was built for the plan's clip shape.
pub fn check_model_input(model: &DetectorModel, plan: &WindowPlan) -> Result<()> {
    let want = InputDims::for_plan(plan);
    if model.config().input != want {
        return Err(Error::Config(format!(
            "model expects {:?} clips, window plan produces {want:?}",
            model.config().input
        )));
    }
    Ok(())
}

/// Reads the night at `path` and the two model files, then analyses it.
pub fn analyze_night(path: impl AsRef<Path>, cfg: &PipelineConfig, mode: Mode) -> Result<Analysis> {
    let night = open_night(path)?;
    let model = load_model(&cfg.model_path)?;
    let ahi = load_ahi_model(&cfg.ahi_model_path)?;
    analyze_record(&night, &model, &ahi, cfg, mode)
}

pub fn analyze_record(
    night: &NightRecord,
    model: &DetectorModel,
    ahi: &AhiModel,
    cfg: &PipelineConfig,
    mode: Mode,
) -> Result<Analysis> {
    cfg.validate(night.meta.fps)?;
    check_model_input(model, &cfg.plan)?;
    let (scores, peak_buffered, misses) = match mode {
        Mode::Streaming => stream_scores(night, model, cfg)?,
        Mode::Batch => {
            if cfg.realtime {
                return Err(Error::Config("real-time pacing needs streaming mode".into()));
            }
            batch_scores(night, model, cfg)?
        }
    };
    let mut report = night_report(
        &night.meta.patient_id,
        &scores,
        night.meta.tib_h(),
        cfg.theta,
        cfg.plan.window_s,
        ahi,
    )?;
    if cfg.realtime {
        report.deadline_misses = Some(misses);
    }
    Ok(Analysis {
        report,
        scores,
        peak_buffered,
    })
}

/// Per-window RA probabilities of a night, streamed.
pub fn window_scores(night: &NightRecord, model: &DetectorModel, cfg: &PipelineConfig) -> Result<Vec<WindowScore>> {
    cfg.validate(night.meta.fps)?;
    check_model_input(model, &cfg.plan)?;
    Ok(stream_scores(night, model, cfg)?.0)
}

fn score(model: &DetectorModel, clip: &Clip) -> Result<WindowScore> {
    Ok(WindowScore {
        start_s: clip.start_s,
        p: probability(model.logit(clip)?),
    })
}

fn stream_scores(
    night: &NightRecord,
    model: &DetectorModel,
    cfg: &PipelineConfig,
) -> Result<(Vec<WindowScore>, usize, usize)> {
    let plan = &cfg.plan;
    let wall = |stream_s: f64| Duration::from_secs_f64(stream_s / cfg.speed);
    let start = Instant::now();
    let (tx, rx) = mpsc::sync_channel::<Result<Clip>>(1);

    std::thread::scope(|s| {
        let producer = s.spawn(move || -> Result<usize> {
            let mut windows = build_windows(night, plan)?;
            let mut peak = 0;
            let mut k = 0;
            while let Some(clip) = windows.next() {
                peak = peak.max(windows.buffered());
                if cfg.realtime {
                    // the window is complete once its last frame has arrived
                    let ready = start + wall(k as f64 * plan.step_s + plan.window_s);
                    std::thread::sleep(ready.saturating_duration_since(Instant::now()));
                }
                let failed = clip.is_err();
                if tx.send(clip).is_err() || failed {
                    break;
                }
                k += 1;
            }
            Ok(peak)
        });

        let mut scores = Vec::new();
        let mut misses = 0;
        let mut first_err = None;
        for (k, clip) in rx.iter().enumerate() {
            match clip.and_then(|c| score(model, &c)) {
                Ok(ws) => scores.push(ws),
                Err(e) => {
                    first_err = Some(e);
                    break;
                }
            }
            if cfg.realtime {
                let deadline = start + wall(k as f64 * plan.step_s + plan.window_s + plan.step_s);
                if Instant::now() > deadline {
                    misses += 1;
                    warn!("clip {k} missed its real-time deadline");
                }
            }
        }
        drop(rx);
        let peak = producer.join().expect("window reader panicked")?;
        match first_err {
            Some(e) => Err(e),
            None => Ok((scores, peak, misses)),
        }
    })
}

fn batch_scores(
    night: &NightRecord,
    model: &DetectorModel,
    cfg: &PipelineConfig,
) -> Result<(Vec<WindowScore>, usize, usize)> {
    let frames = (0..night.frame_count())
        .map(|i| night.source().pixels(i))
        .collect::<Result<Vec<_>>>()?;
    let loaded = frames.len();
    let held = NightRecord::new(
        night.meta.clone(),
        Box::new(MemorySource::new(frames)),
        None,
    )?;
    let clips = build_windows(&held, &cfg.plan)?.collect::<Result<Vec<_>>>()?;
    let scores = clips
        .par_iter()
        .map(|c| score(model, c))
        .collect::<Result<Vec<_>>>()?;
    Ok((scores, loaded, 0))
}

/// Sizes the global rayon pool from `SLACTION_THREADS`, if set.
pub fn configure_threads() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    match rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
        Ok(()) => info!("using {n} worker threads"),
        Err(e) => warn!("thread pool already initialised: {e}"),
    }
    Ok(Some(n))
}

/// Retrospective runtime of an 8-hour night at `per_clip_s` seconds a clip.
pub fn projected_8h_s(per_clip_s: f64) -> f64 {
    per_clip_s * CLIPS_PER_8H as f64
}
