//! Synthetic sleep nights with known ground truth.
//!
//! A static bedroom background with a breathing chest region, Gaussian sensor
//! noise, a static face mosaic and motion textures for arousals, limb
//! movements and wake. Apneas suppress breathing; hypopneas halve it;
//! desaturations are annotation-only. Generation is bit-deterministic per seed.

mod cohort;
mod layout;
mod render;

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video_io::{self, EventAnnotation, EventKind, NightMeta, NightRecord};

pub use cohort::{
    generate_cohort, read_manifest, write_cohort, CohortConfig, CohortManifest, CohortNight,
    ManifestEntry, Severity, COHORT_MANIFEST,
};
pub use layout::{ra_capacity, RA_MAX_LAG_S, RA_MIN_SPACING_S, SA_QUIET_PREFIX_S};

pub const TRUTH_FILE: &str = "truth.json";
pub const OSA_AHI_THRESHOLD: f64 = 15.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Self { x, y, w, h }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }

    pub(crate) fn clip(&self, width: usize, height: usize) -> Rect {
        let x = self.x.min(width);
        let y = self.y.min(height);
        Rect::new(x, y, self.w.min(width - x), self.h.min(height - y))
    }

    pub(crate) fn union(&self, o: &Rect) -> Rect {
        let x = self.x.min(o.x);
        let y = self.y.min(o.y);
        let x1 = (self.x + self.w).max(o.x + o.w);
        let y1 = (self.y + self.h).max(o.y + o.h);
        Rect::new(x, y, x1 - x, y1 - y)
    }

    pub(crate) fn expand(&self, by: usize, width: usize, height: usize) -> Rect {
        let x = self.x.saturating_sub(by);
        let y = self.y.saturating_sub(by);
        Rect::new(x, y, self.w + 2 * by, self.h + 2 * by).clip(width, height)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BreathingConfig {
    pub rect: Rect,
    /// Peak intensity displacement at the centre of the chest region.
    pub amplitude: f64,
    pub period_s: f64,
    /// Amplitude factor of the deep recovery breaths that follow an RA.
    #[serde(default = "default_recovery_gain")]
    pub recovery_gain: f64,
    #[serde(default = "default_recovery_s")]
    pub recovery_s: f64,
}

fn default_recovery_gain() -> f64 {
    3.0
}

fn default_recovery_s() -> f64 {
    15.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionMagnitudes {
    pub ra_burst: f64,
    pub sa_burst: f64,
    pub plma_burst: f64,
    pub wake_sustained: f64,
}

impl Default for MotionMagnitudes {
    fn default() -> Self {
        Self {
            ra_burst: 60.0,
            sa_burst: 60.0,
            plma_burst: 60.0,
            wake_sustained: 50.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    #[serde(default)]
    pub apnea: usize,
    #[serde(default)]
    pub hypopnea: usize,
    #[serde(default)]
    pub desaturation: usize,
    /// Each RA follows one of the apneas/hypopneas.
    #[serde(default)]
    pub ra: usize,
    #[serde(default)]
    pub sa: usize,
    #[serde(default)]
    pub plma: usize,
    #[serde(default)]
    pub wake: usize,
}

/// Events per hour; actual counts are Poisson draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRates {
    pub apnea: f64,
    pub hypopnea: f64,
    pub desaturation: f64,
    /// Fraction of apneas/hypopneas followed by an RA.
    pub ra_fraction: f64,
    pub sa: f64,
    pub plma: f64,
    pub wake: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventPlan {
    Explicit(Vec<EventAnnotation>),
    Counts(EventCounts),
    Rates(EventRates),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub patient_id: String,
    pub duration_s: f64,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub breathing: BreathingConfig,
    pub events: EventPlan,
    pub magnitudes: MotionMagnitudes,
    pub noise_sigma: f64,
    pub mosaic: Rect,
    pub torso: Rect,
    pub limbs: Rect,
}

impl Default for SynthConfig {
    /// A 20-minute, 5 FPS, 320x240 night with every event kind present.
    fn default() -> Self {
        Self {
            patient_id: "synth-0".into(),
            duration_s: 1200.0,
            fps: 5.0,
            width: 320,
            height: 240,
            seed: 0,
            breathing: BreathingConfig {
                rect: Rect::new(92, 96, 64, 48),
                amplitude: 60.0,
                period_s: 4.0,
                recovery_gain: default_recovery_gain(),
                recovery_s: default_recovery_s(),
            },
            events: EventPlan::Counts(EventCounts {
                apnea: 4,
                hypopnea: 2,
                desaturation: 2,
                ra: 4,
                sa: 2,
                plma: 1,
                wake: 1,
            }),
            magnitudes: MotionMagnitudes::default(),
            noise_sigma: 4.0,
            mosaic: Rect::new(32, 96, 48, 48),
            torso: Rect::new(84, 88, 112, 64),
            limbs: Rect::new(196, 92, 104, 56),
        }
    }
}

impl SynthConfig {
    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }

    fn validate_geometry(&self) -> Result<()> {
        if !(self.fps > 0.0 && self.duration_s > 0.0) {
            return Err(Error::Validation("fps and duration must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation("frame size must be positive".into()));
        }
        if self.frame_count() == 0 {
            return Err(Error::Validation("night has no frames".into()));
        }
        if !(self.breathing.period_s > 0.0) || self.noise_sigma < 0.0 {
            return Err(Error::Validation("breathing period must be positive and noise non-negative".into()));
        }
        Ok(())
    }
}

/// Checks the plan invariants: per-kind events do not overlap, each RA starts
/// within 3 s of an apnea/hypopnea end, and each SA has 30 s free of
/// respiratory events before it.
pub fn validate_events(events: &[EventAnnotation], duration_s: f64) -> Result<()> {
    video_io::check_within(events, duration_s)?;
    for kind in EventKind::ALL {
        let mut of_kind: Vec<&EventAnnotation> = events.iter().filter(|e| e.kind == kind).collect();
        of_kind.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        if let Some(w) = of_kind.windows(2).find(|w| w[1].start_s < w[0].end_s) {
            return Err(Error::Validation(format!(
                "overlapping {kind} events at {} s and {} s",
                w[0].start_s, w[1].start_s
            )));
        }
    }
    for ra in events.iter().filter(|e| e.kind == EventKind::RA) {
        let preceded = events.iter().any(|e| {
            e.kind.counts_towards_ahi()
                && e.end_s <= ra.start_s + 1e-9
                && ra.start_s - e.end_s <= RA_MAX_LAG_S + 1e-9
        });
        if !preceded {
            return Err(Error::Validation(format!(
                "RA at {} s is not within {RA_MAX_LAG_S} s of an apnea/hypopnea end",
                ra.start_s
            )));
        }
    }
    for sa in events.iter().filter(|e| e.kind == EventKind::SA) {
        let lo = sa.start_s - SA_QUIET_PREFIX_S;
        if let Some(r) = events
            .iter()
            .find(|e| e.kind.is_respiratory() && e.start_s < sa.start_s && e.end_s > lo)
        {
            return Err(Error::Validation(format!(
                "SA at {} s has a {} event within the preceding {SA_QUIET_PREFIX_S} s",
                sa.start_s, r.kind
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub annotations: Vec<EventAnnotation>,
    pub tib_h: f64,
    pub true_ahi: f64,
    pub osa_true: bool,
    pub ra_count: usize,
}

/// `(apneas + hypopneas) / tib_h`.
pub fn ground_truth_ahi(annotations: &[EventAnnotation], tib_h: f64) -> Result<f64> {
    if !(tib_h > 0.0) {
        return Err(Error::Validation(format!("time in bed must be positive, got {tib_h} h")));
    }
    let n = annotations.iter().filter(|e| e.kind.counts_towards_ahi()).count();
    Ok(n as f64 / tib_h)
}

/// A generated night: lazily rendered frames plus its ground truth.
pub struct SynthNight {
    pub config: SynthConfig,
    pub truth: GroundTruth,
    renderer: Arc<render::Renderer>,
}

impl SynthNight {
    pub fn meta(&self) -> NightMeta {
        NightMeta {
            fps: self.config.fps,
            width: self.config.width,
            height: self.config.height,
            tib_s: self.config.frame_count() as f64 / self.config.fps,
            patient_id: self.config.patient_id.clone(),
        }
    }

    /// In-memory view; frames are rendered on demand.
    pub fn record(&self) -> NightRecord {
        NightRecord::new(
            self.meta(),
            Box::new(render::SynthSource {
                renderer: Arc::clone(&self.renderer),
            }),
            Some(self.truth.annotations.clone()),
        )
        .expect("generated night satisfies its own metadata invariants")
    }

    pub fn render_frame(&self, index: usize) -> Vec<u8> {
        self.renderer.render(index)
    }

    /// Writes the night in the on-disk format plus `truth.json`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        video_io::write_night(dir, &self.record())?;
        let path = dir.join(TRUTH_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&self.truth)?)
            .map_err(|e| Error::io(&path, e))
    }
}

fn resolve_events(cfg: &SynthConfig) -> Result<Vec<EventAnnotation>> {
    let mut rng = ChaCha8Rng::seed_from_u64(render::splitmix(cfg.seed ^ 0xE7E7));
    let counts = match &cfg.events {
        EventPlan::Explicit(evs) => {
            let mut evs = evs.clone();
            video_io::sort_events(&mut evs);
            return Ok(evs);
        }
        EventPlan::Counts(c) => c.clone(),
        EventPlan::Rates(r) => {
            let hours = cfg.duration_s / 3600.0;
            let mut poisson = |rate: f64| -> Result<usize> {
                if rate < 0.0 || !rate.is_finite() {
                    return Err(Error::Validation(format!("invalid event rate {rate}")));
                }
                if rate == 0.0 {
                    return Ok(0);
                }
                let d = Poisson::new(rate * hours).map_err(|e| Error::Validation(e.to_string()))?;
                Ok(d.sample(&mut rng) as usize)
            };
            let apnea = poisson(r.apnea)?;
            let hypopnea = poisson(r.hypopnea)?;
            let c = EventCounts {
                apnea,
                hypopnea,
                desaturation: poisson(r.desaturation)?,
                ra: 0,
                sa: poisson(r.sa)?,
                plma: poisson(r.plma)?,
                wake: poisson(r.wake)?,
            };
            let ra = ((apnea + hypopnea) as f64 * r.ra_fraction.clamp(0.0, 1.0)).round() as usize;
            EventCounts {
                ra: ra.min(ra_capacity(cfg.duration_s)),
                ..c
            }
        }
    };
    layout::layout(&counts, cfg.duration_s, &mut rng)
}

/// Builds a night from its config without touching the disk.
pub fn synthesize(cfg: &SynthConfig) -> Result<SynthNight> {
    cfg.validate_geometry()?;
    let events = resolve_events(cfg)?;
    validate_events(&events, cfg.duration_s)?;
    let tib_h = cfg.frame_count() as f64 / cfg.fps / 3600.0;
    let true_ahi = ground_truth_ahi(&events, tib_h)?;
    let truth = GroundTruth {
        ra_count: events.iter().filter(|e| e.kind == EventKind::RA).count(),
        annotations: events,
        tib_h,
        true_ahi,
        osa_true: true_ahi >= OSA_AHI_THRESHOLD,
    };
    let renderer = Arc::new(render::Renderer::new(cfg, &truth.annotations));
    Ok(SynthNight {
        config: cfg.clone(),
        truth,
        renderer,
    })
}

/// Generates a night and writes it to `out` in the on-disk night format.
pub fn generate_night(cfg: &SynthConfig, out: impl AsRef<Path>) -> Result<GroundTruth> {
    let night = synthesize(cfg)?;
    night.write(out)?;
    Ok(night.truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffing::{count_ldp_between, LdpThreshold};

    fn quiet(duration_s: f64) -> SynthConfig {
        SynthConfig {
            duration_s,
            events: EventPlan::Counts(EventCounts::default()),
            noise_sigma: 0.0,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn static_scene_outside_chest() {
        let night = synthesize(&quiet(20.0)).unwrap();
        let chest = night.config.breathing.rect;
        let w = night.config.width;
        let mut prev = night.render_frame(0);
        for i in 1..100 {
            let cur = night.render_frame(i);
            for (p, (&a, &b)) in prev.iter().zip(&cur).enumerate() {
                if !chest.contains(p % w, p / w) {
                    assert_eq!(a, b, "pixel {p} changed at frame {i}");
                }
            }
            prev = cur;
        }
    }

    #[test]
    fn ahi_from_counts() {
        let cfg = SynthConfig {
            duration_s: 1800.0,
            events: EventPlan::Counts(EventCounts {
                apnea: 10,
                hypopnea: 5,
                ..EventCounts::default()
            }),
            ..SynthConfig::default()
        };
        let night = synthesize(&cfg).unwrap();
        assert_eq!(night.truth.true_ahi, 30.0);
        assert!(night.truth.osa_true);
    }

    #[test]
    fn ground_truth_ahi_examples() {
        let mut evs = Vec::new();
        for i in 0..30 {
            evs.push(EventAnnotation::new(EventKind::Apnea, i as f64 * 60.0, i as f64 * 60.0 + 10.0));
        }
        for i in 0..10 {
            evs.push(EventAnnotation::new(EventKind::Hypopnea, 2000.0 + i as f64 * 60.0, 2010.0 + i as f64 * 60.0));
        }
        evs.push(EventAnnotation::new(EventKind::RA, 11.0, 15.0));
        assert_eq!(ground_truth_ahi(&evs, 8.0).unwrap(), 5.0);
        assert_eq!(ground_truth_ahi(&[], 8.0).unwrap(), 0.0);
        assert!(ground_truth_ahi(&[], 0.0).is_err());
    }

    #[test]
    fn deterministic_frames() {
        let cfg = SynthConfig { seed: 9, ..SynthConfig::default() };
        let a = synthesize(&cfg).unwrap();
        let b = synthesize(&cfg).unwrap();
        assert_eq!(a.truth, b.truth);
        for i in [0, 1, 777, 5999] {
            assert_eq!(a.render_frame(i), b.render_frame(i));
        }
        let c = synthesize(&SynthConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.render_frame(1), c.render_frame(1));
    }

    #[test]
    fn default_layout_invariants() {
        for seed in 0..30 {
            let night = synthesize(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
            let evs = &night.truth.annotations;
            validate_events(evs, 1200.0).unwrap();
            let onsets: Vec<f64> = evs.iter().filter(|e| e.kind == EventKind::RA).map(|e| e.start_s).collect();
            assert_eq!(onsets.len(), 4);
            for w in onsets.windows(2) {
                assert!(w[1] - w[0] >= RA_MIN_SPACING_S - 1e-9);
            }
            assert!(onsets.iter().all(|&t| t >= 15.0));
        }
    }

    #[test]
    fn explicit_plan_validation() {
        let bad_ra = vec![EventAnnotation::new(EventKind::RA, 100.0, 105.0)];
        let cfg = SynthConfig { events: EventPlan::Explicit(bad_ra), ..quiet(300.0) };
        assert!(matches!(synthesize(&cfg), Err(Error::Validation(_))));

        let bad_sa = vec![
            EventAnnotation::new(EventKind::Apnea, 60.0, 75.0),
            EventAnnotation::new(EventKind::SA, 90.0, 95.0),
        ];
        let cfg = SynthConfig { events: EventPlan::Explicit(bad_sa), ..quiet(300.0) };
        assert!(matches!(synthesize(&cfg), Err(Error::Validation(_))));

        let overlap = vec![
            EventAnnotation::new(EventKind::Apnea, 60.0, 75.0),
            EventAnnotation::new(EventKind::Apnea, 70.0, 85.0),
        ];
        let cfg = SynthConfig { events: EventPlan::Explicit(overlap), ..quiet(300.0) };
        assert!(matches!(synthesize(&cfg), Err(Error::Validation(_))));

        let good = vec![
            EventAnnotation::new(EventKind::Hypopnea, 60.0, 75.0),
            EventAnnotation::new(EventKind::RA, 77.0, 84.0),
            EventAnnotation::new(EventKind::SA, 150.0, 156.0),
        ];
        let cfg = SynthConfig { events: EventPlan::Explicit(good), ..quiet(300.0) };
        assert_eq!(synthesize(&cfg).unwrap().truth.ra_count, 1);
    }

    #[test]
    fn too_many_ra_rejected() {
        let cfg = SynthConfig {
            events: EventPlan::Counts(EventCounts { apnea: 20, ra: 20, ..EventCounts::default() }),
            ..quiet(1200.0)
        };
        assert!(matches!(synthesize(&cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn rates_plan() {
        let cfg = SynthConfig {
            duration_s: 3600.0,
            events: EventPlan::Rates(EventRates {
                apnea: 12.0,
                hypopnea: 6.0,
                desaturation: 3.0,
                ra_fraction: 0.4,
                sa: 3.0,
                plma: 2.0,
                wake: 1.0,
            }),
            ..SynthConfig::default()
        };
        let night = synthesize(&cfg).unwrap();
        validate_events(&night.truth.annotations, 3600.0).unwrap();
        assert!(night.truth.true_ahi > 0.0);
    }

    #[test]
    fn bursts_dominate_breathing_in_ldp() {
        let night = synthesize(&SynthConfig { seed: 4, ..SynthConfig::default() }).unwrap();
        let tau = LdpThreshold::DEFAULT;
        let ldp_at = |t: f64| {
            let i = (t * 5.0) as usize;
            count_ldp_between(&night.render_frame(i), &night.render_frame(i + 1), tau)
        };
        let ra = night.truth.annotations.iter().find(|e| e.kind == EventKind::RA).unwrap();
        let apnea = night.truth.annotations.iter().find(|e| e.kind == EventKind::Apnea).unwrap();
        let burst = ldp_at(ra.start_s + 1.0);
        let still = ldp_at(apnea.start_s + 2.0);
        assert!(burst > 20 * still.max(1), "burst {burst} vs apnea {still}");
    }
}
