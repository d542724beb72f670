//! Fixtures shared by the criterion benchmarks.

use slaction::detector::{init_model, DetectorConfig, DetectorModel};
use slaction::runtime::bench_clip_night;
use slaction::video_io::NightRecord;
use slaction::windowing::{build_windows, Clip, WindowPlan};

/// One minute of synthetic 320x240 video at 5 FPS, held in memory.
pub fn one_minute_night(seed: u64) -> NightRecord {
    bench_clip_night(&WindowPlan::default(), seed, 0).expect("benchmark night renders")
}

pub fn default_clip(seed: u64) -> Clip {
    let night = one_minute_night(seed);
    build_windows(&night, &WindowPlan::default())
        .expect("default plan fits the night")
        .next()
        .expect("one window")
        .expect("clip builds")
}

pub fn default_model(seed: u64) -> DetectorModel {
    init_model(&DetectorConfig::default(), seed).expect("default config is within budget")
}

/// A deterministic scattered sequence in `[0, 1)`.
pub fn scattered(n: usize, salt: u64) -> Vec<f64> {
    (0..n as u64)
        .map(|i| {
            let x = (i ^ salt).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            (x >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}
