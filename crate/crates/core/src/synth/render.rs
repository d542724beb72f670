//! Per-frame rendering of a synthetic night.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Rect, SynthConfig};
use crate::error::Result;
use crate::video_io::{EventAnnotation, EventKind, FrameSource};

const TEXTURE_BLOCK: usize = 8;
const MOSAIC_BLOCK: usize = 8;
const PLMA_ON_S: f64 = 1.0;

pub(crate) fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn hash(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5151_CAFE_u64, |h, &p| splitmix(h ^ p))
}

/// Uniform in `[-1, 1)` from a hash.
fn unit(h: u64) -> f32 {
    ((h >> 40) as f32 / (1u64 << 24) as f32) * 2.0 - 1.0
}

#[derive(Clone, Debug)]
struct Motion {
    id: u64,
    start_s: f64,
    end_s: f64,
    kind: EventKind,
    /// PLMA sub-burst period.
    period_s: f64,
}

/// Deterministic renderer: frame `i` depends only on the config and `i`.
pub(crate) struct Renderer {
    width: usize,
    fps: f64,
    seed: u64,
    noise_sigma: f32,
    background: Vec<f32>,
    chest: Rect,
    chest_profile: Vec<f32>,
    amplitude: f32,
    period_s: f64,
    phase0: f64,
    torso: Rect,
    limbs: Rect,
    mosaic: Rect,
    mosaic_pixels: Vec<u8>,
    /// Breathing amplitude factor intervals (apnea 0, hypopnea 0.5).
    suppression: Vec<(f64, f64, f32)>,
    /// Deep-breathing intervals after each RA.
    recovery: Vec<(f64, f64)>,
    recovery_gain: f32,
    motions: Vec<Motion>,
    magnitudes: [f32; 4],
    n_frames: usize,
}

impl Renderer {
    pub(crate) fn new(cfg: &SynthConfig, events: &[EventAnnotation]) -> Self {
        let (w, h) = (cfg.width, cfg.height);
        let seed = cfg.seed;

        // static bedroom: horizontal gradient, blocky texture and a brighter bed
        let mut background = vec![0f32; w * h];
        let bed = cfg.torso.union(&cfg.limbs).expand(12, w, h);
        for y in 0..h {
            for x in 0..w {
                let tex = unit(hash(&[seed, 1, (x / 16) as u64, (y / 16) as u64])) * 12.0;
                let mut v = 70.0 + 40.0 * x as f32 / w as f32 + tex;
                if bed.contains(x, y) {
                    v += 25.0;
                }
                background[y * w + x] = v;
            }
        }

        let chest = cfg.breathing.rect.clip(w, h);
        let mut chest_profile = Vec::with_capacity(chest.w * chest.h);
        for yy in 0..chest.h {
            for xx in 0..chest.w {
                let u = (xx as f32 + 0.5) / chest.w as f32;
                let v = (yy as f32 + 0.5) / chest.h as f32;
                chest_profile.push((std::f32::consts::PI * u).sin() * (std::f32::consts::PI * v).sin());
            }
        }

        let mosaic = cfg.mosaic.clip(w, h);
        let levels = 16.0;
        let mut mosaic_pixels = Vec::with_capacity(mosaic.w * mosaic.h);
        for yy in 0..mosaic.h {
            for xx in 0..mosaic.w {
                let u = unit(hash(&[seed, 2, (xx / MOSAIC_BLOCK) as u64, (yy / MOSAIC_BLOCK) as u64]));
                let v = 120.0 + 60.0 * u;
                mosaic_pixels.push(((v / levels).round() * levels).clamp(0.0, 255.0) as u8);
            }
        }

        let mut suppression = Vec::new();
        let mut recovery = Vec::new();
        let mut motions = Vec::new();
        for (id, ev) in events.iter().enumerate() {
            match ev.kind {
                EventKind::Apnea => suppression.push((ev.start_s, ev.end_s, 0.0)),
                EventKind::Hypopnea => suppression.push((ev.start_s, ev.end_s, 0.5)),
                EventKind::Desaturation => {}
                kind => {
                    if kind == EventKind::RA {
                        recovery.push((ev.end_s, ev.end_s + cfg.breathing.recovery_s));
                    }
                    motions.push(Motion {
                        id: id as u64,
                        start_s: ev.start_s,
                        end_s: ev.end_s,
                        kind,
                        period_s: 4.0 + 2.0 * (unit(hash(&[seed, 3, id as u64])) as f64 + 1.0) / 2.0,
                    });
                }
            }
        }

        let phase0 = (unit(hash(&[seed, 4])) as f64 + 1.0) * std::f64::consts::PI;
        Self {
            width: w,
            fps: cfg.fps,
            seed,
            noise_sigma: cfg.noise_sigma as f32,
            background,
            chest,
            chest_profile,
            amplitude: cfg.breathing.amplitude as f32,
            period_s: cfg.breathing.period_s,
            phase0,
            torso: cfg.torso.clip(w, h),
            limbs: cfg.limbs.clip(w, h),
            mosaic,
            mosaic_pixels,
            suppression,
            recovery,
            recovery_gain: cfg.breathing.recovery_gain as f32,
            motions,
            magnitudes: [
                cfg.magnitudes.ra_burst as f32,
                cfg.magnitudes.sa_burst as f32,
                cfg.magnitudes.plma_burst as f32,
                cfg.magnitudes.wake_sustained as f32,
            ],
            n_frames: (cfg.duration_s * cfg.fps).round() as usize,
        }
    }

    /// Suppression by an ongoing respiratory event wins over recovery.
    fn breathing_factor(&self, t: f64) -> f32 {
        let suppressed = self
            .suppression
            .iter()
            .filter(|&&(s, e, _)| t >= s && t < e)
            .map(|&(_, _, f)| f)
            .reduce(f32::min);
        match suppressed {
            Some(f) => f,
            None if self.recovery.iter().any(|&(s, e)| t >= s && t < e) => self.recovery_gain,
            None => 1.0,
        }
    }

    fn add_texture(&self, buf: &mut [f32], rect: Rect, magnitude: f32, frame: u64, motion: u64) {
        if magnitude == 0.0 {
            return;
        }
        let bx0 = rect.x / TEXTURE_BLOCK;
        let bx1 = (rect.x + rect.w).div_ceil(TEXTURE_BLOCK);
        let row_vals: Vec<Vec<f32>> = (rect.y / TEXTURE_BLOCK..(rect.y + rect.h).div_ceil(TEXTURE_BLOCK))
            .map(|by| {
                (bx0..bx1)
                    .map(|bx| magnitude * unit(hash(&[self.seed, 5, frame, motion, bx as u64, by as u64])))
                    .collect()
            })
            .collect();
        let by0 = rect.y / TEXTURE_BLOCK;
        for y in rect.y..rect.y + rect.h {
            let vals = &row_vals[y / TEXTURE_BLOCK - by0];
            let line = &mut buf[y * self.width..(y + 1) * self.width];
            for x in rect.x..rect.x + rect.w {
                line[x] += vals[x / TEXTURE_BLOCK - bx0];
            }
        }
    }

    pub(crate) fn render(&self, index: usize) -> Vec<u8> {
        let t = index as f64 / self.fps;
        let w = self.width;
        let mut buf = self.background.clone();

        let amp = self.amplitude * self.breathing_factor(t);
        if amp != 0.0 {
            let s = (2.0 * std::f64::consts::PI * t / self.period_s + self.phase0).sin() as f32 * amp;
            let c = self.chest;
            for yy in 0..c.h {
                let line = &mut buf[(c.y + yy) * w + c.x..(c.y + yy) * w + c.x + c.w];
                let prof = &self.chest_profile[yy * c.w..(yy + 1) * c.w];
                for (p, &q) in line.iter_mut().zip(prof) {
                    *p += s * q;
                }
            }
        }

        for m in &self.motions {
            if !(t >= m.start_s && t < m.end_s) {
                continue;
            }
            let frame = index as u64;
            match m.kind {
                EventKind::RA | EventKind::SA => {
                    let mag = if m.kind == EventKind::RA { self.magnitudes[0] } else { self.magnitudes[1] };
                    self.add_texture(&mut buf, self.torso, mag, frame, m.id * 2);
                    self.add_texture(&mut buf, self.limbs, mag, frame, m.id * 2 + 1);
                }
                EventKind::PLMA => {
                    if (t - m.start_s) % m.period_s < PLMA_ON_S {
                        self.add_texture(&mut buf, self.limbs, self.magnitudes[2], frame, m.id * 2);
                    }
                }
                EventKind::Wake => {
                    let mag = self.magnitudes[3] * (0.7 + 0.3 * ((t - m.start_s) * 0.9).sin() as f32);
                    self.add_texture(&mut buf, self.torso, mag, frame, m.id * 2);
                    self.add_texture(&mut buf, self.limbs, mag, frame, m.id * 2 + 1);
                }
                _ => {}
            }
        }

        let mut out = vec![0u8; buf.len()];
        if self.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(hash(&[self.seed, 6, index as u64]));
            for (o, &v) in out.iter_mut().zip(&buf) {
                let n: f32 = StandardNormal.sample(&mut rng);
                *o = (v + self.noise_sigma * n).round().clamp(0.0, 255.0) as u8;
            }
        } else {
            for (o, &v) in out.iter_mut().zip(&buf) {
                *o = v.round().clamp(0.0, 255.0) as u8;
            }
        }

        let m = self.mosaic;
        for yy in 0..m.h {
            let dst = &mut out[(m.y + yy) * w + m.x..(m.y + yy) * w + m.x + m.w];
            dst.copy_from_slice(&self.mosaic_pixels[yy * m.w..(yy + 1) * m.w]);
        }
        out
    }
}

pub(crate) struct SynthSource {
    pub(crate) renderer: std::sync::Arc<Renderer>,
}

impl FrameSource for SynthSource {
    fn len(&self) -> usize {
        self.renderer.n_frames
    }

    fn pixels(&self, index: usize) -> Result<Vec<u8>> {
        if index >= self.renderer.n_frames {
            return Err(crate::Error::Ordering(format!("frame {index} out of range")));
        }
        Ok(self.renderer.render(index))
    }
}
