use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowScore {
    pub start_s: f64,
    pub p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaEvent {
    pub start_s: f64,
    pub end_s: f64,
    pub peak_p: f64,
}

/// Merges windows scoring at least `theta` into events: overlapping
/// `[start_s, start_s + window_s)` intervals form one connected component.
pub fn merge_windows_to_events(scores: &[WindowScore], theta: f64, window_s: f64) -> Vec<RaEvent> {
    let mut positive: Vec<&WindowScore> = scores.iter().filter(|w| w.p >= theta).collect();
    positive.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    let mut events: Vec<RaEvent> = Vec::new();
    for w in positive {
        let end = w.start_s + window_s;
        match events.last_mut() {
            Some(ev) if w.start_s < ev.end_s => {
                ev.end_s = ev.end_s.max(end);
                ev.peak_p = ev.peak_p.max(w.p);
            }
            _ => events.push(RaEvent {
                start_s: w.start_s,
                end_s: end,
                peak_p: w.p,
            }),
        }
    }
    events
}

/// RA events per hour in bed.
pub fn ra_ratio(events: &[RaEvent], tib_h: f64) -> Result<f64> {
    if !(tib_h > 0.0) {
        return Err(Error::Validation(format!("time in bed must be positive, got {tib_h} h")));
    }
    Ok(events.len() as f64 / tib_h)
}

/// Event-level detection counts: a true onset is found when it lies inside a
/// predicted event; each event can claim one onset.
pub fn match_events(events: &[RaEvent], onsets: &[f64]) -> (usize, usize, usize) {
    let mut used = vec![false; events.len()];
    let mut tp = 0;
    for &t in onsets {
        if let Some(i) = (0..events.len()).find(|&i| !used[i] && events[i].start_s <= t && t < events[i].end_s) {
            used[i] = true;
            tp += 1;
        }
    }
    (tp, events.len() - tp, onsets.len() - tp)
}

/// Picks the threshold maximising event-level F1 over a validation set of
/// nights, each given as window scores plus true RA onsets. Ties go to the
/// smallest candidate.
pub fn calibrate_theta(nights: &[(Vec<WindowScore>, Vec<f64>)], window_s: f64, candidates: &[f64]) -> Result<f64> {
    if candidates.is_empty() || nights.is_empty() {
        return Err(Error::Validation("calibration needs candidates and nights".into()));
    }
    let mut best = (f64::NEG_INFINITY, candidates[0]);
    for &theta in candidates {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (scores, onsets) in nights {
            let (a, b, c) = match_events(&merge_windows_to_events(scores, theta, window_s), onsets);
            tp += a;
            fp += b;
            fn_ += c;
        }
        let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
        if f1 > best.0 {
            best = (f1, theta);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ws(starts: &[f64], p: f64) -> Vec<WindowScore> {
        starts.iter().map(|&s| WindowScore { start_s: s, p }).collect()
    }

    #[test]
    fn merge_examples() {
        assert!(merge_windows_to_events(&ws(&[0.0, 30.0], 0.2), 0.5, 60.0).is_empty());
        let e = merge_windows_to_events(&ws(&[90.0, 120.0], 0.9), 0.5, 60.0);
        assert_eq!(e, vec![RaEvent { start_s: 90.0, end_s: 180.0, peak_p: 0.9 }]);
        assert_eq!(merge_windows_to_events(&ws(&[90.0, 300.0], 0.9), 0.5, 60.0).len(), 2);
        // touching intervals do not overlap
        assert_eq!(merge_windows_to_events(&ws(&[0.0, 60.0], 0.9), 0.5, 60.0).len(), 2);
        let mut mixed = ws(&[0.0, 30.0, 60.0], 0.6);
        mixed[1].p = 0.95;
        assert_eq!(merge_windows_to_events(&mixed, 0.5, 60.0)[0].peak_p, 0.95);
    }

    #[test]
    fn ratio_examples() {
        let ev = vec![RaEvent { start_s: 0.0, end_s: 1.0, peak_p: 1.0 }; 40];
        assert_eq!(ra_ratio(&ev, 8.0).unwrap(), 5.0);
        assert_eq!(ra_ratio(&[], 8.0).unwrap(), 0.0);
        assert!(matches!(ra_ratio(&[], 0.0), Err(Error::Validation(_))));
    }

    #[test]
    fn calibration_prefers_separating_threshold() {
        let scores: Vec<WindowScore> = [0.1, 0.35, 0.9, 0.2, 0.3, 0.8, 0.1]
            .iter()
            .enumerate()
            .map(|(i, &p)| WindowScore { start_s: i as f64 * 100.0, p })
            .collect();
        let onsets = vec![230.0, 530.0];
        let theta = calibrate_theta(&[(scores, onsets)], 60.0, &[0.25, 0.5, 0.85]).unwrap();
        assert_eq!(theta, 0.5);
    }

    fn union_len(iv: &mut Vec<(f64, f64)>) -> f64 {
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut total = 0.0;
        let mut cur: Option<(f64, f64)> = None;
        for &(s, e) in iv.iter() {
            cur = match cur {
                Some((cs, ce)) if s < ce => Some((cs, ce.max(e))),
                Some((cs, ce)) => {
                    total += ce - cs;
                    Some((s, e))
                }
                None => Some((s, e)),
            };
        }
        total + cur.map_or(0.0, |(s, e)| e - s)
    }

    proptest! {
        #[test]
        fn higher_theta_events_nest_in_lower(ps in proptest::collection::vec(0.0f64..1.0, 0..60), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let scores: Vec<WindowScore> = ps.iter().enumerate().map(|(i, &p)| WindowScore { start_s: i as f64 * 30.0, p }).collect();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let outer = merge_windows_to_events(&scores, lo, 60.0);
            for e in merge_windows_to_events(&scores, hi, 60.0) {
                prop_assert!(outer.iter().any(|o| o.start_s <= e.start_s && e.end_s <= o.end_s));
            }
        }

        #[test]
        fn events_disjoint_and_cover_positive_union(ps in proptest::collection::vec(0.0f64..1.0, 0..60), theta in 0.0f64..1.0) {
            let scores: Vec<WindowScore> = ps.iter().enumerate().map(|(i, &p)| WindowScore { start_s: i as f64 * 30.0, p }).collect();
            let ev = merge_windows_to_events(&scores, theta, 60.0);
            for w in ev.windows(2) {
                prop_assert!(w[0].end_s <= w[1].start_s);
            }
            let mut pos: Vec<(f64, f64)> = scores.iter().filter(|w| w.p >= theta).map(|w| (w.start_s, w.start_s + 60.0)).collect();
            let total: f64 = ev.iter().map(|e| e.end_s - e.start_s).sum();
            prop_assert!((union_len(&mut pos) - total).abs() < 1e-9);
        }
    }
}
