//! Multi-night cohorts with a chosen severity distribution.
//!
//! Each night draws a target AHI, converts it to an apnea/hypopnea count and
//! co-generates RA events as a noisy linear function of that count.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{layout::ra_capacity, render::splitmix, synthesize, EventCounts, EventPlan, GroundTruth, SynthConfig, SynthNight};
use crate::error::{Error, Result};

pub const COHORT_MANIFEST: &str = "cohort.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Severity {
    Uniform { lo: f64, hi: f64 },
    /// Target AHIs used in order, cycling if shorter than the cohort.
    Fixed { ahi: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub n_nights: usize,
    pub seed: u64,
    pub severity: Severity,
    /// Night template; events, seed and patient id are overwritten.
    pub template: SynthConfig,
    /// Expected RA events per apnea/hypopnea.
    pub ra_per_resp: f64,
    pub ra_noise_sd: f64,
    pub hypopnea_fraction: f64,
    /// Events per hour.
    pub sa_rate: f64,
    pub plma_rate: f64,
    pub wake_rate: f64,
    pub desat_rate: f64,
    /// Relative per-night jitter of breathing amplitude, period and noise.
    pub jitter: f64,
    pub id_prefix: String,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            n_nights: 10,
            seed: 0,
            severity: Severity::Uniform { lo: 0.0, hi: 60.0 },
            template: SynthConfig::default(),
            ra_per_resp: 0.4,
            ra_noise_sd: 0.4,
            hypopnea_fraction: 0.35,
            sa_rate: 9.0,
            plma_rate: 3.0,
            wake_rate: 3.0,
            desat_rate: 6.0,
            jitter: 0.15,
            id_prefix: "p".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub dir: Option<PathBuf>,
    pub patient_id: String,
    pub seed: u64,
    pub target_ahi: f64,
    pub truth: GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortManifest {
    pub config: CohortConfig,
    pub nights: Vec<ManifestEntry>,
}

pub struct CohortNight {
    pub entry: ManifestEntry,
    pub night: SynthNight,
}

fn night_config(cfg: &CohortConfig, index: usize) -> Result<(SynthConfig, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let t = &cfg.template;
    let target = match &cfg.severity {
        Severity::Uniform { lo, hi } => {
            if !(lo <= hi && *lo >= 0.0) {
                return Err(Error::Validation(format!("invalid AHI range [{lo}, {hi}]")));
            }
            if lo == hi { *lo } else { rng.gen_range(*lo..*hi) }
        }
        Severity::Fixed { ahi } => {
            let v = *ahi
                .get(index % ahi.len().max(1))
                .ok_or_else(|| Error::Validation("empty AHI list".into()))?;
            if !(v >= 0.0) {
                return Err(Error::Validation(format!("invalid AHI {v}")));
            }
            v
        }
    };
    let hours = t.duration_s / 3600.0;
    let n_resp = (target * hours).round() as usize;
    let n_hyp = (n_resp as f64 * cfg.hypopnea_fraction.clamp(0.0, 1.0)).round() as usize;
    let noise = Normal::new(0.0, cfg.ra_noise_sd.max(0.0)).map_err(|e| Error::Validation(e.to_string()))?;
    let ra = (cfg.ra_per_resp * n_resp as f64 + noise.sample(&mut rng)).round().max(0.0) as usize;
    let ra = ra.min(n_resp).min(ra_capacity(t.duration_s));
    let mut poisson = |rate: f64| -> usize {
        if rate > 0.0 {
            Poisson::new(rate * hours).map(|d| d.sample(&mut rng) as usize).unwrap_or(0)
        } else {
            0
        }
    };
    let counts = EventCounts {
        apnea: n_resp - n_hyp,
        hypopnea: n_hyp,
        desaturation: poisson(cfg.desat_rate),
        ra,
        sa: poisson(cfg.sa_rate),
        plma: poisson(cfg.plma_rate),
        wake: poisson(cfg.wake_rate),
    };
    let j = cfg.jitter.clamp(0.0, 0.9);
    let mut jit = |v: f64| v * (1.0 + rng.gen_range(-j..=j));
    let mut night = t.clone();
    night.breathing.amplitude = jit(t.breathing.amplitude);
    night.breathing.period_s = jit(t.breathing.period_s);
    night.noise_sigma = jit(t.noise_sigma);
    night.events = EventPlan::Counts(counts);
    night.seed = splitmix(cfg.seed.wrapping_mul(0x1000_0001) ^ index as u64);
    night.patient_id = format!("{}{index:03}", cfg.id_prefix);
    Ok((night, target))
}

/// Generates every night in memory; frames are rendered lazily.
pub fn generate_cohort(cfg: &CohortConfig) -> Result<Vec<CohortNight>> {
    if cfg.n_nights == 0 {
        return Err(Error::Validation("cohort needs at least one night".into()));
    }
    (0..cfg.n_nights)
        .into_par_iter()
        .map(|i| {
            let (night_cfg, target) = night_config(cfg, i)?;
            let night = synthesize(&night_cfg)?;
            Ok(CohortNight {
                entry: ManifestEntry {
                    dir: None,
                    patient_id: night_cfg.patient_id.clone(),
                    seed: night_cfg.seed,
                    target_ahi: target,
                    truth: night.truth.clone(),
                },
                night,
            })
        })
        .collect()
}

/// Writes each night to `out/<patient_id>/` and the manifest to `out/cohort.json`.
pub fn write_cohort(cfg: &CohortConfig, out: impl AsRef<Path>) -> Result<CohortManifest> {
    let out = out.as_ref();
    let nights = generate_cohort(cfg)?;
    let mut entries = Vec::with_capacity(nights.len());
    for n in nights {
        let dir = PathBuf::from(&n.entry.patient_id);
        n.night.write(out.join(&dir))?;
        entries.push(ManifestEntry { dir: Some(dir), ..n.entry });
    }
    let manifest = CohortManifest {
        config: cfg.clone(),
        nights: entries,
    };
    let path = out.join(COHORT_MANIFEST);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<CohortManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
