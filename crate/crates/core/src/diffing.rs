//! Difference images and large-difference-pixel (LDP) statistics.
//!
//! An LDP is a difference pixel whose magnitude strictly exceeds the
//! threshold `tau`. Per-event statistics are computed on differences between
//! consecutive frames at the night's native frame rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video_io::{EventAnnotation, EventKind, Frame, NightRecord};

/// `|a - b|` per pixel, stamped with the later frame's timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LdpThreshold(u8);

impl LdpThreshold {
    pub const DEFAULT: LdpThreshold = LdpThreshold(20);

    pub fn new(tau: u32) -> Result<Self> {
        if !(1..=255).contains(&tau) {
            return Err(Error::Config(format!("LDP threshold must be in [1, 255], got {tau}")));
        }
        Ok(Self(tau as u8))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl Default for LdpThreshold {
    fn default() -> Self {
        Self::DEFAULT
    }
}

pub fn difference_image(a: &Frame, b: &Frame) -> Result<DifferenceImage> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::Shape(format!(
            "cannot difference {}x{} and {}x{} frames",
            a.width, a.height, b.width, b.height
        )));
    }
    let values = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| x.abs_diff(y))
        .collect();
    Ok(DifferenceImage {
        width: a.width,
        height: a.height,
        values,
        t: a.t.max(b.t),
    })
}

pub fn count_ldp(d: &DifferenceImage, tau: LdpThreshold) -> usize {
    d.values.iter().filter(|&&v| v > tau.0).count()
}

/// LDP count of the difference of two pixel buffers without materialising it.
pub fn count_ldp_between(a: &[u8], b: &[u8], tau: LdpThreshold) -> usize {
    a.iter()
        .zip(b)
        .filter(|(&x, &y)| x.abs_diff(y) > tau.0)
        .count()
}

/// Per-difference-image LDP counts over a frame stream.
///
/// Entry `j` (for `j >= 1`) is the count for the difference between frames
/// `j - 1` and `j`; frames may be pushed in any chunking.
#[derive(Clone, Debug, Default)]
pub struct LdpSeries {
    tau: LdpThreshold,
    prev: Option<Vec<u8>>,
    counts: Vec<u32>,
}

impl LdpSeries {
    pub fn new(tau: LdpThreshold) -> Self {
        Self {
            tau,
            prev: None,
            counts: Vec::new(),
        }
    }

    pub fn push(&mut self, pixels: Vec<u8>) -> Result<()> {
        if let Some(prev) = &self.prev {
            if prev.len() != pixels.len() {
                return Err(Error::Shape("frame size changed mid-stream".into()));
            }
            self.counts
                .push(count_ldp_between(prev, &pixels, self.tau) as u32);
        }
        self.prev = Some(pixels);
        Ok(())
    }

    /// Counts for difference images `1..=n`; index 0 of the slice is image 1.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn from_night(night: &NightRecord, tau: LdpThreshold) -> Result<Self> {
        let mut series = Self::new(tau);
        for i in 0..night.frame_count() {
            series.push(night.source().pixels(i)?)?;
        }
        Ok(series)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum StatsMode {
    WithinEvent,
    PreEvent { window_s: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventSeries {
    pub start_s: f64,
    pub end_s: f64,
    /// Pre-event window was cut short at t = 0.
    pub clipped: bool,
    pub counts: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventLdpStats {
    pub kind: EventKind,
    pub mean_ldp: f64,
    pub n_images: usize,
    pub n_events: usize,
    pub clipped_events: usize,
    pub series: Vec<EventSeries>,
}

pub fn event_ldp_stats(
    night: &NightRecord,
    events: &[EventAnnotation],
    tau: LdpThreshold,
    mode: StatsMode,
) -> Result<Vec<EventLdpStats>> {
    let series = LdpSeries::from_night(night, tau)?;
    stats_from_series(series.counts(), night.meta.fps, events, mode)
}

/// Groups LDP counts by event kind. `counts[j - 1]` belongs to the difference
/// image stamped `j / fps`.
pub fn stats_from_series(
    counts: &[u32],
    fps: f64,
    events: &[EventAnnotation],
    mode: StatsMode,
) -> Result<Vec<EventLdpStats>> {
    const EPS: f64 = 1e-9;
    let n_frames = counts.len() + 1;
    let span = n_frames as f64 / fps;
    if let StatsMode::PreEvent { window_s } = mode {
        if !(window_s > 0.0) {
            return Err(Error::Config(format!("pre-event window must be positive, got {window_s}")));
        }
    }

    let mut out: Vec<EventLdpStats> = Vec::new();
    for kind in EventKind::ALL {
        let mut stats = EventLdpStats {
            kind,
            mean_ldp: 0.0,
            n_images: 0,
            n_events: 0,
            clipped_events: 0,
            series: Vec::new(),
        };
        let mut total: u64 = 0;
        for ev in events.iter().filter(|e| e.kind == kind) {
            if ev.start_s < 0.0 || ev.start_s > span + EPS {
                return Err(Error::Validation(format!(
                    "{} event at {} s lies outside the {span} s night",
                    ev.kind, ev.start_s
                )));
            }
            let (lo_t, hi_t, clipped, hi_inclusive) = match mode {
                StatsMode::WithinEvent => (ev.start_s, ev.end_s, false, true),
                StatsMode::PreEvent { window_s } => {
                    let lo = ev.start_s - window_s;
                    (lo.max(0.0), ev.start_s, lo < 0.0, false)
                }
            };
            // difference image j is stamped j / fps
            let lo_j = ((lo_t * fps - EPS).ceil().max(1.0)) as usize;
            let hi_j = if hi_inclusive {
                (hi_t * fps + EPS).floor()
            } else {
                (hi_t * fps - EPS).ceil() - 1.0
            };
            let hi_j = hi_j.min(counts.len() as f64);
            let slice: &[u32] = if hi_j >= lo_j as f64 {
                &counts[lo_j - 1..hi_j as usize]
            } else {
                &[]
            };
            total += slice.iter().map(|&c| c as u64).sum::<u64>();
            stats.n_images += slice.len();
            stats.n_events += 1;
            stats.clipped_events += clipped as usize;
            stats.series.push(EventSeries {
                start_s: ev.start_s,
                end_s: ev.end_s,
                clipped,
                counts: slice.to_vec(),
            });
        }
        if stats.n_events == 0 {
            continue;
        }
        if stats.n_images > 0 {
            stats.mean_ldp = total as f64 / stats.n_images as f64;
        }
        out.push(stats);
    }
    Ok(out)
}

/// `kind,n_images,mean_ldp` rows with a header line.
pub fn stats_to_csv(stats: &[EventLdpStats]) -> String {
    let mut s = String::from("kind,n_images,mean_ldp\n");
    for st in stats {
        s.push_str(&format!("{},{},{:.6}\n", st.kind, st.n_images, st.mean_ldp));
    }
    s
}
