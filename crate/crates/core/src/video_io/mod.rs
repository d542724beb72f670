//! Night ingestion: PGM frame directories, `meta.json` and event annotations.
//!
//! A night on disk is a directory holding `meta.json`, one `frame_%06d.pgm`
//! per frame and, optionally, `annotations.json`. Frame timestamps are not
//! stored; frame `i` is taken at `i / fps` seconds.

mod annotations;
pub mod pgm;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use annotations::{
    check_within, load_annotations, parse_annotations, write_annotations, EventAnnotation,
    EventKind,
};
pub(crate) use annotations::sort_events;

pub const META_FILE: &str = "meta.json";
pub const ANNOTATIONS_FILE: &str = "annotations.json";

/// One 8-bit greyscale image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
    /// Seconds since the start of the night.
    pub t: f64,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>, t: f64) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{} pixels for a {width}x{height} frame",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            t,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8, t: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
            t,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Timestamp of frame `index` in a constant-rate stream.
#[inline]
pub fn frame_time(index: usize, fps: f64) -> f64 {
    index as f64 / fps
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NightMeta {
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    /// Time in bed in seconds. Defaults to `frame_count / fps` when absent from `meta.json`.
    pub tib_s: f64,
    pub patient_id: String,
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    fps: f64,
    width: usize,
    height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tib_s: Option<f64>,
    patient_id: String,
}

impl NightMeta {
    pub fn tib_h(&self) -> f64 {
        self.tib_s / 3600.0
    }

    fn validate(&self, frame_count: usize) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::Format(format!("fps must be positive, got {}", self.fps)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Format("frame width and height must be positive".into()));
        }
        if !(self.tib_s.is_finite() && self.tib_s > 0.0) {
            return Err(Error::Format(format!("tib_s must be positive, got {}", self.tib_s)));
        }
        let span = frame_count as f64 / self.fps - 1.0 / self.fps;
        if self.tib_s + 1e-9 < span {
            return Err(Error::Validation(format!(
                "tib_s {} is shorter than the recorded span {span}",
                self.tib_s
            )));
        }
        Ok(())
    }
}

pub fn read_meta(dir: &Path, frame_count: usize) -> Result<NightMeta> {
    let path = dir.join(META_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let raw: MetaFile = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let meta = NightMeta {
        fps: raw.fps,
        width: raw.width,
        height: raw.height,
        tib_s: raw.tib_s.unwrap_or(frame_count as f64 / raw.fps),
        patient_id: raw.patient_id,
    };
    meta.validate(frame_count)?;
    Ok(meta)
}

pub fn write_meta(dir: &Path, meta: &NightMeta) -> Result<()> {
    let raw = MetaFile {
        fps: meta.fps,
        width: meta.width,
        height: meta.height,
        tib_s: Some(meta.tib_s),
        patient_id: meta.patient_id.clone(),
    };
    let path = dir.join(META_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&raw)?).map_err(|e| Error::io(&path, e))
}

/// Random-access provider of a night's frames.
///
/// Implementations must be deterministic: `frame(i)` returns the same image on
/// every call, which lets windowing and curation seek without buffering.
pub trait FrameSource: Send + Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pixels of frame `index`, row-major.
    fn pixels(&self, index: usize) -> Result<Vec<u8>>;
}

/// Frames held in memory.
pub struct MemorySource {
    frames: Vec<Vec<u8>>,
}

impl MemorySource {
    pub fn new(frames: Vec<Vec<u8>>) -> Self {
        Self { frames }
    }
}

impl FrameSource for MemorySource {
    fn len(&self) -> usize {
        self.frames.len()
    }

    fn pixels(&self, index: usize) -> Result<Vec<u8>> {
        self.frames
            .get(index)
            .cloned()
            .ok_or_else(|| Error::Ordering(format!("frame {index} out of range")))
    }
}

/// Frames read lazily from a `frame_%06d.pgm` directory.
pub struct DirSource {
    dir: PathBuf,
    width: usize,
    height: usize,
    count: usize,
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

impl FrameSource for DirSource {
    fn len(&self) -> usize {
        self.count
    }

    fn pixels(&self, index: usize) -> Result<Vec<u8>> {
        if index >= self.count {
            return Err(Error::Ordering(format!("frame {index} out of range")));
        }
        let path = self.dir.join(frame_file_name(index));
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let (w, h, px) = pgm::decode(&bytes)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if (w, h) != (self.width, self.height) {
            return Err(Error::Format(format!(
                "{} is {w}x{h}, meta.json declares {}x{}",
                path.display(),
                self.width,
                self.height
            )));
        }
        Ok(px)
    }
}

/// A night's frames, metadata and optional annotations.
pub struct NightRecord {
    pub meta: NightMeta,
    pub annotations: Option<Vec<EventAnnotation>>,
    source: Box<dyn FrameSource>,
}

impl fmt::Debug for NightRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NightRecord")
            .field("meta", &self.meta)
            .field("frames", &self.source.len())
            .field("annotations", &self.annotations.as_ref().map(Vec::len))
            .finish()
    }
}

impl NightRecord {
    pub fn new(
        meta: NightMeta,
        source: Box<dyn FrameSource>,
        annotations: Option<Vec<EventAnnotation>>,
    ) -> Result<Self> {
        meta.validate(source.len())?;
        if let Some(evs) = &annotations {
            check_within(evs, meta.tib_s)?;
        }
        Ok(Self {
            meta,
            annotations,
            source,
        })
    }

    /// Builds an in-memory night; `tib_s` defaults to the recording span.
    pub fn from_frames(
        patient_id: impl Into<String>,
        fps: f64,
        width: usize,
        height: usize,
        frames: Vec<Vec<u8>>,
    ) -> Result<Self> {
        if frames.iter().any(|f| f.len() != width * height) {
            return Err(Error::Shape(format!("frame size differs from {width}x{height}")));
        }
        let meta = NightMeta {
            fps,
            width,
            height,
            tib_s: frames.len() as f64 / fps,
            patient_id: patient_id.into(),
        };
        Self::new(meta, Box::new(MemorySource::new(frames)), None)
    }

    pub fn frame_count(&self) -> usize {
        self.source.len()
    }

    /// Recording span `frame_count / fps`, in seconds.
    pub fn duration_s(&self) -> f64 {
        self.frame_count() as f64 / self.meta.fps
    }

    pub fn frame(&self, index: usize) -> Result<Frame> {
        let pixels = self.source.pixels(index)?;
        Frame::new(
            self.meta.width,
            self.meta.height,
            pixels,
            frame_time(index, self.meta.fps),
        )
    }

    /// Sequential iterator over every frame in timestamp order.
    pub fn frames(&self) -> impl Iterator<Item = Result<Frame>> + '_ {
        (0..self.frame_count()).map(move |i| self.frame(i))
    }

    pub fn source(&self) -> &dyn FrameSource {
        self.source.as_ref()
    }
}

/// Opens a night directory. Frames are read on demand.
pub fn open_night(path: impl AsRef<Path>) -> Result<NightRecord> {
    let dir = path.as_ref();
    if !dir.is_dir() {
        return Err(Error::Format(format!("{} is not a directory", dir.display())));
    }
    let mut indices = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(idx) = name
            .strip_prefix("frame_")
            .and_then(|s| s.strip_suffix(".pgm"))
        {
            let parsed = idx
                .parse::<usize>()
                .ok()
                .filter(|_| idx.len() == 6 && idx.bytes().all(|b| b.is_ascii_digit()))
                .ok_or_else(|| Error::Ordering(format!("malformed frame file name {name}")))?;
            indices.push(parsed);
        }
    }
    let meta_exists = dir.join(META_FILE).is_file();
    if !meta_exists {
        return Err(Error::Format(format!("{} has no {META_FILE}", dir.display())));
    }
    if indices.is_empty() {
        return Err(Error::EmptyNight(dir.to_path_buf()));
    }
    indices.sort_unstable();
    if let Some((pos, &idx)) = indices.iter().enumerate().find(|&(pos, &idx)| pos != idx) {
        return Err(Error::Ordering(format!(
            "frame indices are not contiguous from 0: position {pos} holds frame {idx}"
        )));
    }
    let meta = read_meta(dir, indices.len())?;
    let ann_path = dir.join(ANNOTATIONS_FILE);
    let annotations = if ann_path.is_file() {
        Some(load_annotations(&ann_path)?)
    } else {
        None
    };
    let source = DirSource {
        dir: dir.to_path_buf(),
        width: meta.width,
        height: meta.height,
        count: indices.len(),
    };
    NightRecord::new(meta, Box::new(source), annotations)
}

/// Writes `meta.json`, every frame and (if present) `annotations.json`.
pub fn write_night(dir: impl AsRef<Path>, night: &NightRecord) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for i in 0..night.frame_count() {
        let px = night.source.pixels(i)?;
        let path = dir.join(frame_file_name(i));
        std::fs::write(&path, pgm::encode(night.meta.width, night.meta.height, &px))
            .map_err(|e| Error::io(&path, e))?;
    }
    write_meta(dir, &night.meta)?;
    if let Some(evs) = &night.annotations {
        write_annotations(dir.join(ANNOTATIONS_FILE), evs)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_frame_night(dir: &Path) {
        let frames = (0..3u8).map(|i| vec![i * 10; 6]).collect();
        let night = NightRecord::from_frames("p1", 5.0, 3, 2, frames).unwrap();
        write_night(dir, &night).unwrap();
    }

    #[test]
    fn three_frames_at_5fps() {
        let tmp = tempfile::tempdir().unwrap();
        three_frame_night(tmp.path());
        let night = open_night(tmp.path()).unwrap();
        let ts: Vec<f64> = night.frames().map(|f| f.unwrap().t).collect();
        assert_eq!(ts, vec![0.0, 0.2, 0.4]);
        assert_eq!(night.frame(2).unwrap().pixels, vec![20; 6]);
        assert!((night.meta.tib_s - 0.6).abs() < 1e-12);
        assert!(night.annotations.is_none());
    }

    #[test]
    fn missing_meta_is_format_error() {
        let tmp = tempfile::tempdir().unwrap();
        three_frame_night(tmp.path());
        std::fs::remove_file(tmp.path().join(META_FILE)).unwrap();
        assert!(matches!(open_night(tmp.path()), Err(Error::Format(_))));
    }

    #[test]
    fn corrupt_meta_is_format_error() {
        let tmp = tempfile::tempdir().unwrap();
        three_frame_night(tmp.path());
        std::fs::write(tmp.path().join(META_FILE), "{\"fps\": 5").unwrap();
        assert!(matches!(open_night(tmp.path()), Err(Error::Format(_))));
        std::fs::write(
            tmp.path().join(META_FILE),
            r#"{"fps": 0, "width": 3, "height": 2, "patient_id": "x"}"#,
        )
        .unwrap();
        assert!(matches!(open_night(tmp.path()), Err(Error::Format(_))));
    }

    #[test]
    fn tib_defaults_to_span() {
        let tmp = tempfile::tempdir().unwrap();
        three_frame_night(tmp.path());
        std::fs::write(
            tmp.path().join(META_FILE),
            r#"{"fps": 5, "width": 3, "height": 2, "patient_id": "x"}"#,
        )
        .unwrap();
        let night = open_night(tmp.path()).unwrap();
        assert!((night.meta.tib_s - 0.6).abs() < 1e-12);
    }

    #[test]
    fn empty_night() {
        let tmp = tempfile::tempdir().unwrap();
        std::fs::write(
            tmp.path().join(META_FILE),
            r#"{"fps": 5, "width": 3, "height": 2, "patient_id": "x"}"#,
        )
        .unwrap();
        assert!(matches!(open_night(tmp.path()), Err(Error::EmptyNight(_))));
    }

    #[test]
    fn gap_in_indices_is_ordering_error() {
        let tmp = tempfile::tempdir().unwrap();
        three_frame_night(tmp.path());
        std::fs::rename(
            tmp.path().join(frame_file_name(1)),
            tmp.path().join(frame_file_name(7)),
        )
        .unwrap();
        assert!(matches!(open_night(tmp.path()), Err(Error::Ordering(_))));
    }

    #[test]
    fn wrong_frame_size_is_format_error() {
        let tmp = tempfile::tempdir().unwrap();
        three_frame_night(tmp.path());
        std::fs::write(tmp.path().join(frame_file_name(1)), pgm::encode(2, 2, &[0; 4])).unwrap();
        let night = open_night(tmp.path()).unwrap();
        assert!(matches!(night.frame(1), Err(Error::Format(_))));
    }

    #[test]
    fn timestamps_are_index_over_fps() {
        let night = NightRecord::from_frames("p", 2.5, 1, 1, vec![vec![0]; 1000]).unwrap();
        for (i, f) in night.frames().enumerate() {
            assert!((f.unwrap().t - i as f64 / 2.5).abs() <= 1e-9);
        }
    }
}
