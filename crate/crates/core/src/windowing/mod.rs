//! Turns a night into detector clips: temporal downsampling, box-filter
//! downscaling, consecutive-sample differencing and fixed sliding windows.

mod clipfile;
mod curate;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video_io::{frame_time, Frame, NightRecord};

pub use clipfile::{
    decode_clip, encode_clip, read_clip_dir, write_clip_dir, ClipEntry, CLIP_HEADER_LEN,
    CLIP_MAGIC, CLIP_MANIFEST,
};
pub use curate::{curate_training_clips, CuratedClip, Curation, MIN_PRE_AROUSAL_S, SEGMENT_S};

const GRID_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub window_s: f64,
    pub step_s: f64,
    pub fps_target: f64,
    pub clip_w: usize,
    pub clip_h: usize,
}

impl Default for WindowPlan {
    fn default() -> Self {
        Self {
            window_s: 60.0,
            step_s: 30.0,
            fps_target: 2.5,
            clip_w: 160,
            clip_h: 120,
        }
    }
}

fn on_grid(x: f64) -> Option<usize> {
    let r = x.round();
    ((x - r).abs() < 1e-6 && r >= 0.0).then_some(r as usize)
}

impl WindowPlan {
    /// Checks the plan against a source frame rate.
    ///
    /// Window and step must both be whole numbers of samples at `fps_target`.
    pub fn validate(&self, source_fps: f64) -> Result<()> {
        if !(self.window_s > 0.0) {
            return Err(Error::Config(format!("window_s must be positive, got {}", self.window_s)));
        }
        if !(self.step_s > 0.0 && self.step_s <= self.window_s) {
            return Err(Error::Config(format!(
                "step_s must be in (0, window_s], got {}",
                self.step_s
            )));
        }
        if !(self.fps_target > 0.0) {
            return Err(Error::Config("fps_target must be positive".into()));
        }
        if self.fps_target > source_fps + GRID_EPS {
            return Err(Error::Config(format!(
                "fps_target {} exceeds source fps {source_fps}",
                self.fps_target
            )));
        }
        if self.clip_w == 0 || self.clip_h == 0 {
            return Err(Error::Config("clip dimensions must be positive".into()));
        }
        match (on_grid(self.window_s * self.fps_target), on_grid(self.step_s * self.fps_target)) {
            (Some(w), Some(s)) if w >= 2 && s >= 1 => Ok(()),
            _ => Err(Error::Config(format!(
                "window {} s and step {} s must span whole samples (at least 2 per window) at {} fps",
                self.window_s, self.step_s, self.fps_target
            ))),
        }
    }

    pub fn samples_per_window(&self) -> usize {
        (self.window_s * self.fps_target).round() as usize
    }

    pub fn step_samples(&self) -> usize {
        (self.step_s * self.fps_target).round() as usize
    }

    /// Difference images per clip, `T_d`.
    pub fn diffs_per_clip(&self) -> usize {
        self.samples_per_window() - 1
    }

    /// Source frames spanned by one window at `source_fps`.
    pub fn frames_per_window(&self, source_fps: f64) -> usize {
        (self.window_s * source_fps).ceil() as usize
    }
}

/// Number of complete windows in a recording of `duration_s` seconds.
pub fn window_count(duration_s: f64, window_s: f64, step_s: f64) -> usize {
    if duration_s + GRID_EPS < window_s {
        return 0;
    }
    ((duration_s - window_s) / step_s + GRID_EPS).floor() as usize + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClipLabel {
    RA,
    #[serde(rename = "nonRA")]
    NonRA,
}

impl ClipLabel {
    pub fn is_positive(self) -> bool {
        self == ClipLabel::RA
    }
}

/// A window of consecutive difference images, normalised to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub start_s: f64,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// `[frames][height][width]`, row-major.
    pub data: Vec<f32>,
    pub label: Option<ClipLabel>,
}

impl Clip {
    pub fn new(
        start_s: f64,
        frames: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
        label: Option<ClipLabel>,
    ) -> Result<Self> {
        if data.len() != frames * height * width {
            return Err(Error::Shape(format!(
                "{} values for a {frames}x{height}x{width} clip",
                data.len()
            )));
        }
        Ok(Self {
            start_s,
            frames,
            height,
            width,
            data,
            label,
        })
    }

    pub fn zeros(frames: usize, height: usize, width: usize) -> Self {
        Self {
            start_s: 0.0,
            frames,
            height,
            width,
            data: vec![0.0; frames * height * width],
            label: None,
        }
    }

    /// Builds a clip from consecutive downscaled samples.
    pub fn from_samples(start_s: f64, width: usize, height: usize, samples: &[&[u8]]) -> Self {
        PackedClip::from_samples(start_s, width, height, samples).unpack()
    }

    /// The 8-bit form, if every value is an exact multiple of 1/255.
    pub fn pack(&self) -> Option<PackedClip> {
        let diffs = self
            .data
            .iter()
            .map(|&v| {
                let q = (v * 255.0).round();
                ((0.0..=255.0).contains(&q) && q / 255.0 == v).then_some(q as u8)
            })
            .collect::<Option<Vec<u8>>>()?;
        Some(PackedClip {
            start_s: self.start_s,
            frames: self.frames,
            height: self.height,
            width: self.width,
            diffs,
            label: self.label,
        })
    }

    pub fn diff(&self, t: usize) -> &[f32] {
        let plane = self.width * self.height;
        &self.data[t * plane..(t + 1) * plane]
    }

    pub fn with_label(mut self, label: ClipLabel) -> Self {
        self.label = Some(label);
        self
    }
}

/// A clip stored as raw 8-bit absolute differences, a quarter the size of
/// [`Clip`]. Unpacking is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedClip {
    pub start_s: f64,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub diffs: Vec<u8>,
    pub label: Option<ClipLabel>,
}

impl PackedClip {
    pub fn from_samples(start_s: f64, width: usize, height: usize, samples: &[&[u8]]) -> Self {
        let frames = samples.len().saturating_sub(1);
        let mut diffs = Vec::with_capacity(frames * width * height);
        for pair in samples.windows(2) {
            diffs.extend(pair[0].iter().zip(pair[1]).map(|(&a, &b)| a.abs_diff(b)));
        }
        Self {
            start_s,
            frames,
            height,
            width,
            diffs,
            label: None,
        }
    }

    pub fn unpack(&self) -> Clip {
        Clip {
            start_s: self.start_s,
            frames: self.frames,
            height: self.height,
            width: self.width,
            data: self.diffs.iter().map(|&d| d as f32 / 255.0).collect(),
            label: self.label,
        }
    }

    pub fn with_label(mut self, label: ClipLabel) -> Self {
        self.label = Some(label);
        self
    }
}

/// Source frame index kept as sample `k` when resampling `fps` to `fps_target`.
#[inline]
pub fn sample_source_index(k: usize, fps: f64, fps_target: f64) -> usize {
    (k as f64 * fps / fps_target).round() as usize
}

/// Source indices retained by temporal downsampling of an `n`-frame stream.
pub fn downsample_indices(n: usize, fps: f64, fps_target: f64) -> Result<Vec<usize>> {
    if !(fps_target > 0.0) || fps_target > fps + GRID_EPS {
        return Err(Error::Config(format!(
            "target rate {fps_target} must be in (0, {fps}]"
        )));
    }
    Ok((0..)
        .map(|k| sample_source_index(k, fps, fps_target))
        .take_while(|&i| i < n)
        .collect())
}

/// Frames of `night` resampled to `fps_target`, keeping their original timestamps.
pub fn downsample_stream(
    night: &NightRecord,
    fps_target: f64,
) -> Result<impl Iterator<Item = Result<Frame>> + '_> {
    let indices = downsample_indices(night.frame_count(), night.meta.fps, fps_target)?;
    Ok(indices.into_iter().map(move |i| night.frame(i)))
}

/// Area-average downscale; output values rounded half-up.
pub fn spatial_downscale(f: &Frame, clip_w: usize, clip_h: usize) -> Result<Frame> {
    let pixels = downscale_pixels(&f.pixels, f.width, f.height, clip_w, clip_h)?;
    Ok(Frame {
        width: clip_w,
        height: clip_h,
        pixels,
        t: f.t,
    })
}

pub fn downscale_pixels(
    pixels: &[u8],
    width: usize,
    height: usize,
    out_w: usize,
    out_h: usize,
) -> Result<Vec<u8>> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::Config("target dimensions must be positive".into()));
    }
    if out_w > width || out_h > height {
        return Err(Error::Config(format!(
            "cannot downscale {width}x{height} to larger {out_w}x{out_h}"
        )));
    }
    if pixels.len() != width * height {
        return Err(Error::Shape(format!("{} pixels for {width}x{height}", pixels.len())));
    }
    if width % out_w == 0 && height % out_h == 0 {
        return Ok(block_mean(pixels, width, width / out_w, height / out_h, out_w, out_h));
    }
    let cols = axis_weights(width, out_w);
    let rows = axis_weights(height, out_h);
    let area = (width as f64 / out_w as f64) * (height as f64 / out_h as f64);
    let mut out = Vec::with_capacity(out_w * out_h);
    for row in &rows {
        for col in &cols {
            let mut acc = 0.0f64;
            for &(y, wy) in row {
                let line = &pixels[y * width..];
                for &(x, wx) in col {
                    acc += wy * wx * line[x] as f64;
                }
            }
            out.push(round_half_up(acc / area));
        }
    }
    Ok(out)
}

fn round_half_up(v: f64) -> u8 {
    (v + 0.5 + 1e-9).floor().clamp(0.0, 255.0) as u8
}

fn block_mean(pixels: &[u8], width: usize, bx: usize, by: usize, out_w: usize, out_h: usize) -> Vec<u8> {
    let n = (bx * by) as u32;
    let mut sums = vec![0u32; out_w];
    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        sums.iter_mut().for_each(|s| *s = 0);
        for y in oy * by..(oy + 1) * by {
            let line = &pixels[y * width..(y + 1) * width];
            for (ox, s) in sums.iter_mut().enumerate() {
                *s += line[ox * bx..(ox + 1) * bx].iter().map(|&p| p as u32).sum::<u32>();
            }
        }
        // round half up in integer arithmetic: floor((2s + n) / 2n)
        out.extend(sums.iter().map(|&s| ((2 * s + n) / (2 * n)) as u8));
    }
    out
}

/// For each output cell, the source indices it overlaps and the overlap length.
fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let lo = o as f64 * scale;
            let hi = (o + 1) as f64 * scale;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|i| {
                    let w = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                    (w > 1e-12).then_some((i, w))
                })
                .collect()
        })
        .collect()
}

/// Reads sample `k` of `night` and downscales it to the plan's clip size.
pub(crate) fn read_sample(night: &NightRecord, plan: &WindowPlan, k: usize) -> Result<Vec<u8>> {
    let idx = sample_source_index(k, night.meta.fps, plan.fps_target);
    if idx >= night.frame_count() {
        return Err(Error::Ordering(format!(
            "sample {k} maps to frame {idx} past the end of a {}-frame night",
            night.frame_count()
        )));
    }
    let px = night.source().pixels(idx)?;
    downscale_pixels(&px, night.meta.width, night.meta.height, plan.clip_w, plan.clip_h)
}

/// Extracts the clip whose first sample is `start_sample`.
pub fn clip_at(night: &NightRecord, plan: &WindowPlan, start_sample: usize) -> Result<Clip> {
    packed_clip_at(night, plan, start_sample).map(|c| c.unpack())
}

pub fn packed_clip_at(night: &NightRecord, plan: &WindowPlan, start_sample: usize) -> Result<PackedClip> {
    let samples = (start_sample..start_sample + plan.samples_per_window())
        .map(|k| read_sample(night, plan, k))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[u8]> = samples.iter().map(Vec::as_slice).collect();
    Ok(PackedClip::from_samples(
        start_sample as f64 / plan.fps_target,
        plan.clip_w,
        plan.clip_h,
        &refs,
    ))
}

/// Sequential sliding-window clip stream over a night.
///
/// Holds at most one window of downscaled samples; each source frame is read
/// once.
pub struct WindowStream<'a> {
    night: &'a NightRecord,
    plan: WindowPlan,
    ring: VecDeque<Vec<u8>>,
    ring_start: usize,
    next_window: usize,
    total: usize,
}

impl<'a> WindowStream<'a> {
    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Samples currently buffered.
    pub fn buffered(&self) -> usize {
        self.ring.len()
    }

    fn next_clip(&mut self) -> Result<Clip> {
        let n_w = self.plan.samples_per_window();
        let s0 = self.next_window * self.plan.step_samples();
        while self.ring_start < s0 {
            if self.ring.pop_front().is_none() {
                self.ring_start = s0;
                break;
            }
            self.ring_start += 1;
        }
        while self.ring.len() < n_w {
            let k = self.ring_start + self.ring.len();
            self.ring.push_back(read_sample(self.night, &self.plan, k)?);
        }
        self.next_window += 1;
        let refs: Vec<&[u8]> = self.ring.iter().map(Vec::as_slice).collect();
        Ok(Clip::from_samples(
            s0 as f64 / self.plan.fps_target,
            self.plan.clip_w,
            self.plan.clip_h,
            &refs,
        ))
    }
}

impl Iterator for WindowStream<'_> {
    type Item = Result<Clip>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_window >= self.total {
            return None;
        }
        let clip = self.next_clip();
        if clip.is_err() {
            self.total = self.next_window;
        }
        Some(clip)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.total - self.next_window;
        (rest, Some(rest))
    }
}

/// Sliding windows `[k * step_s, k * step_s + window_s)` over the whole night.
/// Partial tail windows are dropped.
pub fn build_windows<'a>(night: &'a NightRecord, plan: &WindowPlan) -> Result<WindowStream<'a>> {
    plan.validate(night.meta.fps)?;
    if plan.clip_w > night.meta.width || plan.clip_h > night.meta.height {
        return Err(Error::Config(format!(
            "clip size {}x{} exceeds frame size {}x{}",
            plan.clip_w, plan.clip_h, night.meta.width, night.meta.height
        )));
    }
    Ok(WindowStream {
        night,
        plan: plan.clone(),
        ring: VecDeque::with_capacity(plan.samples_per_window()),
        ring_start: 0,
        next_window: 0,
        total: window_count(night.duration_s(), plan.window_s, plan.step_s),
    })
}

/// Timestamp of sample `k`.
pub fn sample_time(k: usize, plan: &WindowPlan, source_fps: f64) -> f64 {
    frame_time(sample_source_index(k, source_fps, plan.fps_target), source_fps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pack_roundtrip_is_exact() {
        let a: Vec<u8> = (0..12).map(|i| (i * 37 % 256) as u8).collect();
        let b: Vec<u8> = (0..12).map(|i| (i * 91 % 256) as u8).collect();
        let clip = Clip::from_samples(4.0, 4, 3, &[&a, &b, &a]);
        let packed = clip.pack().unwrap();
        assert_eq!(packed.unpack(), clip);
        let odd = Clip::new(0.0, 1, 1, 1, vec![0.3], None).unwrap();
        assert!(odd.pack().is_none());
    }

    fn indexed_night(n: usize, fps: f64, w: usize, h: usize) -> NightRecord {
        let frames = (0..n).map(|i| vec![(i % 256) as u8; w * h]).collect();
        NightRecord::from_frames("p", fps, w, h, frames).unwrap()
    }

    #[test]
    fn downsample_300_frames_to_150() {
        let night = indexed_night(300, 5.0, 1, 1);
        let kept: Vec<Frame> = downsample_stream(&night, 2.5)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(kept.len(), 150);
        let survivors: Vec<usize> = kept.iter().map(|f| (f.t * 5.0).round() as usize).collect();
        let expected: Vec<usize> = (0..150).map(|k| 2 * k).collect();
        assert_eq!(survivors, expected);
    }

    #[test]
    fn downsample_identity_and_error() {
        let night = indexed_night(17, 5.0, 1, 1);
        let idx = downsample_indices(17, 5.0, 5.0).unwrap();
        assert_eq!(idx, (0..17).collect::<Vec<_>>());
        assert!(matches!(downsample_stream(&night, 10.0).err(), Some(Error::Config(_))));
    }

    #[test]
    fn downsample_twice_is_once() {
        for n in [0, 1, 2, 7, 300, 301] {
            let once = downsample_indices(n, 5.0, 2.5).unwrap();
            let again = downsample_indices(once.len(), 2.5, 2.5).unwrap();
            let twice: Vec<usize> = again.iter().map(|&i| once[i]).collect();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn downscale_constant() {
        let f = Frame::filled(320, 240, 100, 0.0);
        for (w, h) in [(160, 120), (100, 70), (1, 1), (320, 240)] {
            let g = spatial_downscale(&f, w, h).unwrap();
            assert!(g.pixels.iter().all(|&v| v == 100), "{w}x{h}");
        }
    }

    #[test]
    fn downscale_rounds_half_up() {
        let f = Frame::new(2, 2, vec![0, 0, 255, 255], 0.0).unwrap();
        assert_eq!(spatial_downscale(&f, 1, 1).unwrap().pixels, vec![128]);
        let f = Frame::new(3, 1, vec![0, 0, 255], 0.0).unwrap();
        // 2 outputs over 3 inputs: [0, 0.5*0] and [0.5*0 + 255] / 1.5
        assert_eq!(spatial_downscale(&f, 2, 1).unwrap().pixels, vec![0, 170]);
    }

    #[test]
    fn downscale_matches_block_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let px: Vec<u8> = (0..64).map(|_| rng.gen()).collect();
        let f = Frame::new(8, 8, px.clone(), 0.0).unwrap();
        let g = spatial_downscale(&f, 4, 4).unwrap();
        for oy in 0..4 {
            for ox in 0..4 {
                let mut s = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        s += px[(2 * oy + dy) * 8 + 2 * ox + dx] as f64;
                    }
                }
                let expect = (s / 4.0 + 0.5).floor() as u8;
                assert_eq!(g.pixels[oy * 4 + ox], expect);
            }
        }
    }

    #[test]
    fn downscale_general_path_agrees_with_block_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let px: Vec<u8> = (0..12 * 6).map(|_| rng.gen()).collect();
        let fast = downscale_pixels(&px, 12, 6, 4, 3).unwrap();
        let cols = axis_weights(12, 4);
        let rows = axis_weights(6, 3);
        let mut slow = Vec::new();
        for r in &rows {
            for c in &cols {
                let mut acc = 0.0;
                for &(y, wy) in r {
                    for &(x, wx) in c {
                        acc += wy * wx * px[y * 12 + x] as f64;
                    }
                }
                slow.push(round_half_up(acc / 6.0));
            }
        }
        assert_eq!(fast, slow);
    }

    #[test]
    fn downscale_errors() {
        let f = Frame::filled(4, 4, 0, 0.0);
        assert!(matches!(spatial_downscale(&f, 0, 2), Err(Error::Config(_))));
        assert!(matches!(spatial_downscale(&f, 8, 2), Err(Error::Config(_))));
    }

    #[test]
    fn window_count_examples() {
        assert_eq!(window_count(21600.0, 60.0, 30.0), 719);
        assert_eq!(window_count(60.0, 60.0, 30.0), 1);
        assert_eq!(window_count(59.0, 60.0, 30.0), 0);
        assert_eq!(window_count(1200.0, 60.0, 30.0), 39);
    }

    #[test]
    fn default_plan_shapes() {
        let plan = WindowPlan::default();
        assert_eq!(plan.samples_per_window(), 150);
        assert_eq!(plan.diffs_per_clip(), 149);
        assert_eq!(plan.step_samples(), 75);
        assert!(plan.validate(5.0).is_ok());
        assert!(plan.validate(2.0).is_err());
        let odd = WindowPlan { window_s: 60.1, ..plan.clone() };
        assert!(odd.validate(5.0).is_err());
        let bad_step = WindowPlan { step_s: 90.0, ..plan };
        assert!(bad_step.validate(5.0).is_err());
    }

    #[test]
    fn windows_over_small_night() {
        let plan = WindowPlan { clip_w: 2, clip_h: 2, ..WindowPlan::default() };
        let night = indexed_night(300, 5.0, 4, 4);
        let clips: Vec<Clip> = build_windows(&night, &plan).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(clips.len(), 1);
        assert_eq!(clips[0].frames, 149);
        // consecutive kept frames differ by 2 intensity levels
        assert!(clips[0].data.iter().all(|&v| (v - 2.0 / 255.0).abs() < 1e-7 || v == 254.0 / 255.0));
        let short = indexed_night(295, 5.0, 4, 4);
        assert_eq!(build_windows(&short, &plan).unwrap().count(), 0);
    }

    #[test]
    fn stream_matches_random_access() {
        let plan = WindowPlan { window_s: 4.0, step_s: 2.0, clip_w: 2, clip_h: 2, ..WindowPlan::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frames = (0..100).map(|_| (0..16).map(|_| rng.gen()).collect()).collect();
        let night = NightRecord::from_frames("p", 5.0, 4, 4, frames).unwrap();
        let stream: Vec<Clip> = build_windows(&night, &plan).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(stream.len(), window_count(20.0, 4.0, 2.0));
        for (j, c) in stream.iter().enumerate() {
            let direct = clip_at(&night, &plan, j * plan.step_samples()).unwrap();
            assert_eq!(c, &direct);
            assert_eq!(c.start_s, j as f64 * 2.0);
        }
    }

    fn enumerate_windows(d: f64, w: f64, s: f64) -> usize {
        let mut n = 0;
        while n as f64 * s + w <= d + 1e-9 {
            n += 1;
        }
        n
    }

    proptest! {
        #[test]
        fn window_count_matches_enumeration(d in 0u32..5000, w in 1u32..200, s_frac in 1u32..=100) {
            let s = ((w * s_frac) as f64 / 100.0).max(0.4);
            let s = s.min(w as f64);
            prop_assert_eq!(window_count(d as f64, w as f64, s), enumerate_windows(d as f64, w as f64, s));
        }

        #[test]
        fn clip_values_in_unit_range(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames = (0..40).map(|_| (0..36).map(|_| rng.gen()).collect()).collect();
            let night = NightRecord::from_frames("p", 5.0, 6, 6, frames).unwrap();
            let plan = WindowPlan { window_s: 2.0, step_s: 0.8, clip_w: 3, clip_h: 3, ..WindowPlan::default() };
            for clip in build_windows(&night, &plan).unwrap() {
                let clip = clip.unwrap();
                prop_assert_eq!(clip.frames, plan.diffs_per_clip());
                prop_assert!(clip.data.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
