//! Respiratory-arousal detection and apnea-hypopnea index estimation from
//! infrared sleep video.
//!
//! The pipeline turns a night of greyscale frames into sliding 60 s clips of
//! frame differences, scores each clip with a compact (2+1)D convolutional
//! classifier, merges positive windows into arousal events and maps the
//! per-hour arousal rate to an AHI estimate with a Huber regressor.

pub mod detector;
pub mod diffing;
pub mod error;
pub mod estimator;
pub mod runtime;
pub mod synth;
pub mod video_io;
pub mod windowing;

pub use error::{Error, Result};
pub use video_io::{open_night, EventAnnotation, EventKind, Frame, NightMeta, NightRecord};
pub use windowing::{build_windows, Clip, ClipLabel, PackedClip, WindowPlan};
