//! Places a requested number of events on a night's timeline.
//!
//! Arousal-bearing respiratory episodes go first, one per equal-width zone,
//! with onsets jittered so consecutive RA onsets stay at least
//! [`RA_MIN_SPACING_S`] apart. Everything else is dropped into the remaining
//! free time at uniformly random feasible positions.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::EventCounts;
use crate::error::{Error, Result};
use crate::video_io::{EventAnnotation, EventKind};

pub const LEAD_S: f64 = 30.0;
pub const TAIL_S: f64 = 10.0;
pub const RA_MIN_SPACING_S: f64 = 120.0;
pub const RA_MAX_LAG_S: f64 = 3.0;
pub const SA_QUIET_PREFIX_S: f64 = 30.0;

const RESP_DURATION: (f64, f64) = (10.0, 25.0);
const RA_LAG: (f64, f64) = (0.5, RA_MAX_LAG_S);
const BURST_DURATION: (f64, f64) = (5.0, 10.0);
const PLMA_DURATION: (f64, f64) = (15.0, 30.0);
const WAKE_DURATION: (f64, f64) = (30.0, 60.0);
const DESAT_DURATION: (f64, f64) = (10.0, 20.0);
/// Quiet time reserved before PLMA and Wake so they never follow a respiratory event closely.
const MOTION_PREFIX_S: f64 = 20.0;
const GUARD_S: f64 = 3.0;
const MAX_ATTEMPTS: usize = 64;

/// Largest RA count that fits a night of `duration_s` seconds.
pub fn ra_capacity(duration_s: f64) -> usize {
    let span = duration_s - LEAD_S - TAIL_S;
    let episode = RESP_DURATION.1 + RA_LAG.1 + BURST_DURATION.1 + GUARD_S;
    if span < episode {
        0
    } else {
        ((span / RA_MIN_SPACING_S).floor() as usize).max(1)
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.gen_range(lo..=hi)
}

struct Placement {
    /// Reserved interval, including any quiet prefix.
    lo: f64,
    hi: f64,
}

pub(crate) fn layout(counts: &EventCounts, duration_s: f64, rng: &mut ChaCha8Rng) -> Result<Vec<EventAnnotation>> {
    let n_resp = counts.apnea + counts.hypopnea;
    if counts.ra > n_resp {
        return Err(Error::Validation(format!(
            "{} RA events need as many apneas/hypopneas, only {n_resp} requested",
            counts.ra
        )));
    }
    if counts.ra > ra_capacity(duration_s) {
        return Err(Error::Validation(format!(
            "{} RA events do not fit a {duration_s} s night (capacity {})",
            counts.ra,
            ra_capacity(duration_s)
        )));
    }
    let mut last_err = None;
    for _ in 0..MAX_ATTEMPTS {
        match try_layout(counts, duration_s, rng) {
            Ok(mut evs) => {
                crate::video_io::sort_events(&mut evs);
                return Ok(evs);
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Validation("event layout failed".into())))
}

fn try_layout(counts: &EventCounts, duration_s: f64, rng: &mut ChaCha8Rng) -> Result<Vec<EventAnnotation>> {
    let lo_t = LEAD_S;
    let hi_t = duration_s - TAIL_S;
    let mut events = Vec::new();
    let mut reserved: Vec<Placement> = Vec::new();

    let mut resp_kinds: Vec<EventKind> = std::iter::repeat(EventKind::Apnea)
        .take(counts.apnea)
        .chain(std::iter::repeat(EventKind::Hypopnea).take(counts.hypopnea))
        .collect();
    resp_kinds.shuffle(rng);
    let (ra_kinds, plain_kinds) = resp_kinds.split_at(counts.ra);

    if counts.ra > 0 {
        let zone = (hi_t - lo_t) / counts.ra as f64;
        let lead = RESP_DURATION.1 + RA_LAG.1;
        let tail = BURST_DURATION.1 + GUARD_S;
        let mut jitter_max = zone - lead - tail;
        if counts.ra > 1 {
            jitter_max = jitter_max.min(zone - RA_MIN_SPACING_S);
        }
        if jitter_max < 0.0 {
            return Err(Error::Validation("RA zones too short".into()));
        }
        for (j, &kind) in ra_kinds.iter().enumerate() {
            let zone_start = lo_t + j as f64 * zone;
            let onset = zone_start + lead + rng.gen_range(0.0..=jitter_max);
            let lag = draw(rng, RA_LAG);
            let d = draw(rng, RESP_DURATION);
            let burst = draw(rng, BURST_DURATION);
            let resp_end = onset - lag;
            events.push(EventAnnotation::new(kind, resp_end - d, resp_end));
            events.push(EventAnnotation::new(EventKind::RA, onset, onset + burst));
            reserved.push(Placement {
                lo: resp_end - d,
                hi: onset + burst,
            });
        }
    }

    // (kind, duration, quiet prefix)
    let mut rest: Vec<(EventKind, f64, f64)> = Vec::new();
    for _ in 0..counts.wake {
        rest.push((EventKind::Wake, draw(rng, WAKE_DURATION), MOTION_PREFIX_S));
    }
    for _ in 0..counts.plma {
        rest.push((EventKind::PLMA, draw(rng, PLMA_DURATION), MOTION_PREFIX_S));
    }
    for _ in 0..counts.sa {
        rest.push((EventKind::SA, draw(rng, BURST_DURATION), SA_QUIET_PREFIX_S));
    }
    for &kind in plain_kinds {
        rest.push((kind, draw(rng, RESP_DURATION), 0.0));
    }
    for _ in 0..counts.desaturation {
        rest.push((EventKind::Desaturation, draw(rng, DESAT_DURATION), 0.0));
    }
    // longest reservations first packs more reliably
    rest.sort_by(|a, b| (b.1 + b.2).total_cmp(&(a.1 + a.2)));

    for (kind, dur, prefix) in rest {
        let need = prefix + dur;
        reserved.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut gaps = Vec::new();
        let mut cursor = lo_t - prefix.min(LEAD_S);
        for p in &reserved {
            gaps.push((cursor, p.lo - GUARD_S));
            cursor = p.hi + GUARD_S;
        }
        gaps.push((cursor, hi_t));
        let feasible: Vec<(f64, f64)> = gaps
            .into_iter()
            .filter_map(|(a, b)| (b - a >= need).then_some((a, b - need)))
            .collect();
        let total: f64 = feasible.iter().map(|(a, b)| b - a).sum();
        if feasible.is_empty() {
            return Err(Error::Validation(format!(
                "no room left for a {dur:.1} s {kind} event"
            )));
        }
        let mut pick = rng.gen_range(0.0..=total);
        let mut start = feasible[feasible.len() - 1].1;
        for (a, b) in &feasible {
            if pick <= b - a {
                start = a + pick;
                break;
            }
            pick -= b - a;
        }
        let ev_start = start + prefix;
        events.push(EventAnnotation::new(kind, ev_start, ev_start + dur));
        reserved.push(Placement {
            lo: start,
            hi: ev_start + dur,
        });
    }
    Ok(events)
}
