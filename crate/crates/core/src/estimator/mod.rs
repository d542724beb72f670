//! From window probabilities to an AHI estimate: event merging, RA ratio,
//! Huber regression, OSA decision and evaluation metrics.

mod events;
mod huber;
mod metrics;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use events::{calibrate_theta, match_events, merge_windows_to_events, ra_ratio, RaEvent, WindowScore};
pub use huber::{classify_osa, fit_huber, huber_objective, predict_ahi, AhiModel, DEFAULT_DELTA, OSA_THRESHOLD};
pub use metrics::{
    aggregate_nights, average_ranks, classification_metrics, f1_score, spearman, Aggregate,
    ClassificationMetrics,
};

pub const DEFAULT_THETA: f64 = 0.5;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NightReport {
    pub patient_id: String,
    pub tib_h: f64,
    pub n_windows: usize,
    pub theta: f64,
    pub ra_events: Vec<RaEvent>,
    pub ra_ratio: f64,
    pub ahi_estimate: f64,
    pub osa_positive: bool,
    /// Clips that finished after their real-time deadline; present only in
    /// real-time runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_misses: Option<usize>,
}

/// Builds a night report from its window scores.
pub fn night_report(
    patient_id: &str,
    scores: &[WindowScore],
    tib_h: f64,
    theta: f64,
    window_s: f64,
    model: &AhiModel,
) -> Result<NightReport> {
    model.validate()?;
    let ra_events = merge_windows_to_events(scores, theta, window_s);
    let ratio = ra_ratio(&ra_events, tib_h)?;
    let ahi = predict_ahi(model, ratio);
    Ok(NightReport {
        patient_id: patient_id.to_string(),
        tib_h,
        n_windows: scores.len(),
        theta,
        ra_events,
        ra_ratio: ratio,
        ahi_estimate: ahi,
        osa_positive: classify_osa(model, ahi),
        deadline_misses: None,
    })
}

pub fn save_ahi_model(model: &AhiModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, serde_json::to_string_pretty(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_ahi_model(path: impl AsRef<Path>) -> Result<AhiModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let model: AhiModel = serde_json::from_str(&text)?;
    model.validate()?;
    Ok(model)
}

/// `start_s,p` rows with a header line.
pub fn scores_to_csv(scores: &[WindowScore]) -> String {
    let mut s = String::from("start_s,p\n");
    for w in scores {
        s.push_str(&format!("{},{}\n", w.start_s, w.p));
    }
    s
}

pub fn scores_from_csv(text: &str) -> Result<Vec<WindowScore>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("start_s,p") {
        return Err(Error::Format("scores CSV must start with a start_s,p header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let (a, b) = l
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("bad scores row {l:?}")))?;
            let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad number {v:?}: {e}")));
            Ok(WindowScore {
                start_s: parse(a)?,
                p: parse(b)?,
            })
        })
        .collect()
}
