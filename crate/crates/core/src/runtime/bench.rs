use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::detector::load_model;
use crate::error::{Error, Result};
use crate::synth::{synthesize, EventPlan, SynthConfig};
use crate::video_io::NightRecord;
use crate::windowing::{build_windows, WindowPlan};

use super::{check_model_input, projected_8h_s};

/// Per-clip total reported for the embedded reference device.
pub const REFERENCE_TOTAL_S: f64 = 3.264;
/// Reference retrospective runtime of an 8-hour night (about 50 minutes).
pub const REFERENCE_8H_S: f64 = 50.0 * 60.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single sample.
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_clips: usize,
    pub model_load_s: f64,
    pub per_clip_preprocess_s: MeanSd,
    pub per_clip_inference_s: MeanSd,
    pub total_per_clip_s: MeanSd,
    /// Peak resident set size of the process, when the platform reports it.
    pub peak_resident_bytes: Option<u64>,
    /// Deadline a clip must meet to keep pace with the stream.
    pub step_s: f64,
    pub realtime_feasible: bool,
    pub projected_8h_s: f64,
    pub reference_total_s: f64,
    pub reference_8h_s: f64,
}

/// Raw frames of benchmark clip `i`: a quiet one-minute synthetic recording.
pub fn bench_clip_night(plan: &WindowPlan, seed: u64, i: usize) -> Result<NightRecord> {
    let cfg = SynthConfig {
        patient_id: format!("bench-{i}"),
        duration_s: plan.window_s,
        seed: seed.wrapping_add(i as u64),
        events: EventPlan::Explicit(Vec::new()),
        ..SynthConfig::default()
    };
    let night = synthesize(&cfg)?;
    let frames = (0..cfg.frame_count()).map(|k| night.render_frame(k)).collect();
    NightRecord::from_frames(cfg.patient_id, cfg.fps, cfg.width, cfg.height, frames)
}

/// Times model loading, then preprocessing (resampling, downscaling,
/// differencing) and inference for `n_clips` seeded one-minute clips held in
/// memory.
pub fn benchmark(model_path: impl AsRef<Path>, plan: &WindowPlan, n_clips: usize, seed: u64) -> Result<BenchReport> {
    if n_clips < 5 {
        return Err(Error::Config(format!("benchmark needs at least 5 clips, got {n_clips}")));
    }
    let t = Instant::now();
    let model = load_model(model_path)?;
    let model_load_s = t.elapsed().as_secs_f64();
    check_model_input(&model, plan)?;

    let (mut pre, mut inf, mut tot) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..n_clips {
        let night = bench_clip_night(plan, seed, i)?;
        let t0 = Instant::now();
        let clip = build_windows(&night, plan)?
            .next()
            .ok_or_else(|| Error::Config("window longer than the benchmark clip".into()))??;
        let t1 = Instant::now();
        std::hint::black_box(model.logit(&clip)?);
        let t2 = Instant::now();
        pre.push((t1 - t0).as_secs_f64());
        inf.push((t2 - t1).as_secs_f64());
        tot.push((t2 - t0).as_secs_f64());
    }
    let total = MeanSd::of(&tot);
    Ok(BenchReport {
        n_clips,
        model_load_s,
        per_clip_preprocess_s: MeanSd::of(&pre),
        per_clip_inference_s: MeanSd::of(&inf),
        total_per_clip_s: total,
        peak_resident_bytes: peak_resident_bytes(),
        step_s: plan.step_s,
        realtime_feasible: total.mean <= plan.step_s,
        projected_8h_s: projected_8h_s(total.mean),
        reference_total_s: REFERENCE_TOTAL_S,
        reference_8h_s: REFERENCE_8H_S,
    })
}

/// `VmHWM` from `/proc/self/status`.
pub fn peak_resident_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}
