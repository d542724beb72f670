//! Independent reference implementations shared by integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use slaction::detector::{BlockConfig, DetectorConfig, DetectorModel, InputDims};

/// Direct evaluation of the detector logit: every output element is an
/// explicit bounds-checked sum, in f64.
pub fn reference_logit(model: &DetectorModel, input: &[f32]) -> f64 {
    let cfg = model.config();
    let seg = |name: &str| -> Vec<f64> { model.segment(name).unwrap().iter().map(|&v| v as f64).collect() };
    let (mut t, mut h, mut w) = (cfg.input.frames, cfg.input.height, cfg.input.width);
    let mut c_in = 1;
    let mut x: Vec<f64> = input.iter().map(|&v| v as f64 * cfg.input_gain).collect();
    let at = |x: &[f64], c: usize, tt: usize, y: usize, xx: usize, t: usize, h: usize, w: usize| x[((c * t + tt) * h + y) * w + xx];

    for (bi, b) in cfg.blocks.iter().enumerate() {
        let k = b.spatial_kernel;
        let p = if k % 2 == 1 { k / 2 } else { 0 };
        let s = b.spatial_stride;
        let ws = seg(&format!("block{bi}.spatial"));
        let h1 = (h + 2 * p - k) / s + 1;
        let w1 = (w + 2 * p - k) / s + 1;
        let co = b.channels;
        let mut sp = vec![0.0; co * t * h1 * w1];
        for o in 0..co {
            for tt in 0..t {
                for y in 0..h1 {
                    for xx in 0..w1 {
                        let mut acc = 0.0;
                        for i in 0..c_in {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (y * s + ky) as isize - p as isize;
                                    let ix = (xx * s + kx) as isize - p as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    acc += ws[((o * c_in + i) * k + ky) * k + kx] * at(&x, i, tt, iy as usize, ix as usize, t, h, w);
                                }
                            }
                        }
                        sp[((o * t + tt) * h1 + y) * w1 + xx] = acc;
                    }
                }
            }
        }
        let kt = b.temporal_kernel;
        let pt = if kt % 2 == 1 { kt / 2 } else { 0 };
        let st = b.temporal_stride;
        let wt = seg(&format!("block{bi}.temporal"));
        let bt = seg(&format!("block{bi}.temporal_bias"));
        let t1 = (t + 2 * pt - kt) / st + 1;
        let mut act = vec![0.0; co * t1 * h1 * w1];
        for o in 0..co {
            for tt in 0..t1 {
                for y in 0..h1 {
                    for xx in 0..w1 {
                        let mut acc = bt[o];
                        for i in 0..co {
                            for q in 0..kt {
                                let ti = (tt * st + q) as isize - pt as isize;
                                if ti < 0 || ti >= t as isize {
                                    continue;
                                }
                                acc += wt[(o * co + i) * kt + q] * at(&sp, i, ti as usize, y, xx, t, h1, w1);
                            }
                        }
                        act[((o * t1 + tt) * h1 + y) * w1 + xx] = acc / (1.0 + (-acc).exp());
                    }
                }
            }
        }
        let (t2, h2, w2) = (t1 / b.pool_t, h1 / b.pool_s, w1 / b.pool_s);
        let mut pooled = vec![0.0; co * t2 * h2 * w2];
        for c in 0..co {
            for tt in 0..t2 {
                for y in 0..h2 {
                    for xx in 0..w2 {
                        let mut acc = 0.0;
                        for a in 0..b.pool_t {
                            for dy in 0..b.pool_s {
                                for dx in 0..b.pool_s {
                                    acc += at(&act, c, tt * b.pool_t + a, y * b.pool_s + dy, xx * b.pool_s + dx, t1, h1, w1);
                                }
                            }
                        }
                        pooled[((c * t2 + tt) * h2 + y) * w2 + xx] = acc / (b.pool_t * b.pool_s * b.pool_s) as f64;
                    }
                }
            }
        }
        x = pooled;
        (t, h, w) = (t2, h2, w2);
        c_in = co;
    }
    let n = t * h * w;
    let feat: Vec<f64> = (0..c_in).map(|c| x[c * n..(c + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let wh = seg("head.hidden");
    let bh = seg("head.hidden_bias");
    let wo = seg("head.out");
    let bo = seg("head.out_bias");
    let mut z = bo[0];
    for j in 0..cfg.head_hidden {
        let pre: f64 = bh[j] + (0..c_in).map(|c| wh[j * c_in + c] * feat[c]).sum::<f64>();
        z += wo[j] * pre / (1.0 + (-pre).exp());
    }
    z
}

/// A random small detector configuration that fits its input.
pub fn random_tiny_config(rng: &mut ChaCha8Rng) -> DetectorConfig {
    loop {
        let input = InputDims {
            frames: rng.gen_range(6..14),
            height: rng.gen_range(5..12),
            width: rng.gen_range(5..12),
        };
        let n_blocks = rng.gen_range(1..=3);
        let blocks = (0..n_blocks)
            .map(|_| BlockConfig {
                channels: rng.gen_range(1..4),
                spatial_kernel: rng.gen_range(1..4),
                spatial_stride: rng.gen_range(1..3),
                temporal_kernel: rng.gen_range(1..4),
                temporal_stride: rng.gen_range(1..3),
                pool_t: rng.gen_range(1..3),
                pool_s: rng.gen_range(1..3),
            })
            .collect();
        let cfg = DetectorConfig {
            input,
            blocks,
            head_hidden: rng.gen_range(1..5),
            input_gain: rng.gen_range(0.5..4.0),
            param_budget_bytes: 6_000_000,
        };
        if cfg.validate().is_ok() {
            return cfg;
        }
    }
}

/// Random weights including nonzero biases.
pub fn randomize(model: &DetectorModel, rng: &mut ChaCha8Rng) -> DetectorModel {
    let w: Vec<f32> = model.weights().iter().map(|_| rng.gen_range(-0.8..0.8)).collect();
    DetectorModel::from_weights(model.config().clone(), w).unwrap()
}
