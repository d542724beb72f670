use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{packed_clip_at, ClipLabel, PackedClip, WindowPlan};
use crate::error::{Error, Result};
use crate::video_io::{EventKind, NightRecord};

/// Minimum footage a positive clip must show before the arousal onset.
pub const MIN_PRE_AROUSAL_S: f64 = 15.0;
/// One negative clip is drawn per RA-free segment of this length.
pub const SEGMENT_S: f64 = 600.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CuratedClip {
    pub patient_id: String,
    pub clip: PackedClip,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Curation {
    pub clips: Vec<CuratedClip>,
    /// RA onsets skipped for lack of pre-arousal footage.
    pub skipped_onsets: usize,
}

impl Curation {
    pub fn positives(&self) -> usize {
        self.clips
            .iter()
            .filter(|c| c.clip.label == Some(ClipLabel::RA))
            .count()
    }

    pub fn negatives(&self) -> usize {
        self.clips.len() - self.positives()
    }
}

/// Selects labelled training clips.
///
/// Positives: one clip per RA onset, placed so the onset falls between
/// 15 s and `window_s - 1` s into the clip. Negatives: one clip at a random
/// offset inside every 10-minute segment that contains no RA onset. Each
/// night draws from its own ChaCha stream, so results do not depend on
/// how nights are scheduled.
pub fn curate_training_clips(
    nights: &[NightRecord],
    plan: &WindowPlan,
    seed: u64,
) -> Result<Curation> {
    if plan.window_s - 1.0 < MIN_PRE_AROUSAL_S {
        return Err(Error::Config(format!(
            "window of {} s cannot hold {MIN_PRE_AROUSAL_S} s of pre-arousal footage",
            plan.window_s
        )));
    }
    let per_night = nights
        .par_iter()
        .enumerate()
        .map(|(i, night)| curate_night(night, plan, seed, i as u64))
        .collect::<Vec<_>>();
    let mut out = Curation::default();
    for r in per_night {
        let (clips, skipped) = r?;
        out.clips.extend(clips);
        out.skipped_onsets += skipped;
    }
    if out.skipped_onsets > 0 {
        warn!(
            "skipped {} RA onsets with less than {MIN_PRE_AROUSAL_S} s of preceding footage",
            out.skipped_onsets
        );
    }
    Ok(out)
}

fn curate_night(
    night: &NightRecord,
    plan: &WindowPlan,
    seed: u64,
    stream: u64,
) -> Result<(Vec<CuratedClip>, usize)> {
    plan.validate(night.meta.fps)?;
    let events = night.annotations.as_ref().ok_or_else(|| {
        Error::Validation(format!("night {} has no annotations", night.meta.patient_id))
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let duration = night.duration_s();
    let window = plan.window_s;
    let fps_t = plan.fps_target;
    // latest sample that still leaves a full window inside the night
    let last_start = ((duration - window) * fps_t + 1e-9).floor();
    let snap = |start: f64| -> usize { ((start * fps_t + 1e-9).floor().min(last_start)).max(0.0) as usize };

    let onsets: Vec<f64> = events
        .iter()
        .filter(|e| e.kind == EventKind::RA)
        .map(|e| e.start_s)
        .collect();

    let mut starts: Vec<(usize, ClipLabel)> = Vec::new();
    let mut skipped = 0;
    for &onset in &onsets {
        let lo = MIN_PRE_AROUSAL_S.max(onset + window - duration);
        let hi = (window - 1.0).min(onset);
        if onset < MIN_PRE_AROUSAL_S || lo > hi || last_start < 0.0 {
            skipped += 1;
            continue;
        }
        let offset = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        starts.push((snap(onset - offset), ClipLabel::RA));
    }

    let mut seg_start = 0.0;
    while seg_start + window <= duration + 1e-9 {
        let seg_end = (seg_start + SEGMENT_S).min(duration);
        let has_onset = onsets.iter().any(|&t| t >= seg_start && t < seg_end);
        if !has_onset {
            let latest = seg_end - window;
            let start = if latest > seg_start {
                rng.gen_range(seg_start..=latest)
            } else {
                seg_start
            };
            let s0 = ((start * fps_t - 1e-9).ceil().max(0.0) as usize).min(snap(latest));
            starts.push((s0, ClipLabel::NonRA));
        }
        seg_start += SEGMENT_S;
    }

    starts.sort_by_key(|&(s, label)| (s, label.is_positive()));
    let clips = starts
        .into_iter()
        .map(|(s0, label)| {
            Ok(CuratedClip {
                patient_id: night.meta.patient_id.clone(),
                clip: packed_clip_at(night, plan, s0)?.with_label(label),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((clips, skipped))
}
