use super::*;
use crate::windowing::ClipLabel;
use rand::Rng;

fn tiny_config() -> DetectorConfig {
    DetectorConfig {
        input: InputDims { frames: 9, height: 8, width: 8 },
        blocks: vec![
            BlockConfig { channels: 2, spatial_kernel: 3, spatial_stride: 1, temporal_kernel: 3, temporal_stride: 1, pool_t: 2, pool_s: 2 },
            BlockConfig { channels: 3, spatial_kernel: 2, spatial_stride: 2, temporal_kernel: 2, temporal_stride: 2, pool_t: 1, pool_s: 1 },
        ],
        head_hidden: 4,
        input_gain: 2.0,
        param_budget_bytes: DEFAULT_PARAM_BUDGET_BYTES,
    }
}

fn random_clip(rng: &mut ChaCha8Rng, d: InputDims) -> Clip {
    let data = (0..d.frames * d.height * d.width).map(|_| rng.gen_range(0.0..1.0)).collect();
    Clip::new(0.0, d.frames, d.height, d.width, data, None).unwrap()
}

#[test]
fn default_parameter_count_by_hand() {
    // per block: spatial c*cin*k*k, temporal c*c*kt, bias c
    let b1 = 4 * 4 * 4 + 4 * 4 * 3 + 4;
    let b2 = 8 * 4 * 9 + 8 * 8 * 3 + 8;
    let b3 = 16 * 8 * 9 + 16 * 16 * 3 + 16;
    let b4 = 32 * 16 * 9 + 32 * 32 * 3 + 32;
    let head = 16 * 32 + 16 + 16 + 1;
    let cfg = DetectorConfig::default();
    assert_eq!(cfg.param_count().unwrap(), b1 + b2 + b3 + b4 + head);
    assert!(cfg.param_count().unwrap() * 2 <= 6_000_000);
    assert_eq!(cfg.input, InputDims { frames: 149, height: 120, width: 160 });
}

#[test]
fn budget_enforced_at_construction() {
    let cfg = DetectorConfig { param_budget_bytes: 100, ..tiny_config() };
    match init_model(&cfg, 0) {
        Err(Error::Config(msg)) => assert!(msg.contains(&tiny_config().param_count().unwrap().to_string())),
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn too_small_input_is_config_error() {
    let cfg = DetectorConfig { input: InputDims { frames: 2, height: 2, width: 2 }, ..tiny_config() };
    assert!(matches!(init_model(&cfg, 0), Err(Error::Config(_))));
}

#[test]
fn init_is_deterministic_with_zero_biases() {
    let a = init_model(&DetectorConfig::default(), 7).unwrap();
    let b = init_model(&DetectorConfig::default(), 7).unwrap();
    assert_eq!(a.weights(), b.weights());
    assert_ne!(a.weights(), init_model(&DetectorConfig::default(), 8).unwrap().weights());
    for s in a.segments().iter().filter(|s| s.name.ends_with("bias")) {
        assert!(a.segment(&s.name).unwrap().iter().all(|&w| w == 0.0));
    }
}

#[test]
fn zero_clip_gives_one_half() {
    let cfg = tiny_config();
    let m = init_model(&cfg, 3).unwrap();
    let z = Clip::zeros(9, 8, 8);
    assert_eq!(m.predict(&z).unwrap(), 0.5);
}

#[test]
fn outputs_strictly_inside_unit_interval() {
    let cfg = tiny_config();
    let mut m = init_model(&cfg, 3).unwrap();
    let out = m.layout.b_out;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let clip = random_clip(&mut rng, cfg.input);
    for bias in [-1e4f32, -50.0, 0.0, 50.0, 1e4] {
        m.weights[out] = bias;
        let p = m.predict(&clip).unwrap();
        assert!(p > 0.0 && p < 1.0, "{p}");
    }
}

#[test]
fn wrong_clip_shape() {
    let m = init_model(&tiny_config(), 0).unwrap();
    assert!(matches!(m.predict(&Clip::zeros(9, 8, 7)), Err(Error::Shape(_))));
}

#[test]
fn save_load_reproduces_outputs() {
    let cfg = tiny_config();
    let m = init_model(&cfg, 5).unwrap();
    let bytes = write_model(&m).unwrap();
    let back = read_model(&bytes).unwrap();
    assert_eq!(back, m);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let clip = random_clip(&mut rng, cfg.input);
    assert_eq!(m.logit(&clip).unwrap().to_bits(), back.logit(&clip).unwrap().to_bits());

    let mut truncated = bytes.clone();
    truncated.pop();
    assert!(matches!(read_model(&truncated), Err(Error::Format(_))));
    let text = String::from_utf8_lossy(&bytes[..bytes.iter().position(|&b| b == b'\n').unwrap()]).into_owned();
    let bumped = text.replace("\"version\":1", "\"version\":99");
    let mut other = bumped.into_bytes();
    other.extend_from_slice(&bytes[text.len()..]);
    assert!(matches!(read_model(&other), Err(Error::Format(_))));
}

#[test]
fn gradient_matches_finite_differences() {
    let cfg = tiny_config();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = init_model(&cfg, 4).unwrap();
    let mut w: Vec<f64> = m.weights().iter().map(|&v| v as f64).collect();
    // nonzero biases so every path carries gradient
    for s in m.segments().iter().filter(|s| s.name.ends_with("bias")) {
        for v in &mut w[s.offset..s.offset + s.len] {
            *v = rng.gen_range(-0.3..0.3);
        }
    }
    let clip = random_clip(&mut rng, cfg.input);
    let x: Vec<f64> = clip.data.iter().map(|&v| v as f64).collect();
    for positive in [true, false] {
        let (_, g) = precise::loss_and_gradient(&cfg, &w, &x, positive, 2.5).unwrap();
        let h = 1e-6;
        for i in 0..w.len() {
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let num = (precise::loss(&cfg, &wp, &x, positive, 2.5).unwrap()
                - precise::loss(&cfg, &wm, &x, positive, 2.5).unwrap())
                / (2.0 * h);
            let rel = (g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: analytic {} numeric {num}", g[i]);
        }
    }
}

/// Clips with or without a burst of motion in the second half.
fn separable_clips(n: usize, d: InputDims, seed: u64) -> Vec<Clip> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let positive = i % 2 == 0;
            let mut data: Vec<f32> = (0..d.frames * d.height * d.width).map(|_| rng.gen_range(0.0..0.03)).collect();
            if positive {
                let plane = d.height * d.width;
                for v in &mut data[d.frames / 2 * plane..] {
                    *v += rng.gen_range(0.2..0.6);
                }
            }
            let label = if positive { ClipLabel::RA } else { ClipLabel::NonRA };
            Clip::new(0.0, d.frames, d.height, d.width, data, Some(label)).unwrap()
        })
        .collect()
}

#[test]
fn separable_clips_are_learned() {
    let cfg = tiny_config();
    let clips = separable_clips(32, cfg.input, 1);
    let m = init_model(&cfg, 0).unwrap();
    let tc = TrainConfig { epochs: 50, batch_size: 4, learning_rate: 1e-2, ..TrainConfig::default() };
    let (trained, report) = train(&m, &clips, None, &tc).unwrap();
    let correct = clips
        .iter()
        .filter(|c| (trained.predict(c).unwrap() > 0.5) == c.label.unwrap().is_positive())
        .count();
    assert_eq!(correct, 32, "loss history {:?}", report.history.last());
}

#[test]
fn training_is_deterministic_and_lr_zero_is_identity() {
    let cfg = tiny_config();
    let clips = separable_clips(12, cfg.input, 2);
    let m = init_model(&cfg, 0).unwrap();
    let tc = TrainConfig { epochs: 3, batch_size: 5, seed: 4, ..TrainConfig::default() };
    let a = train(&m, &clips, None, &tc).unwrap();
    let b = train(&m, &clips, None, &tc).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
    let frozen = train(&m, &clips, None, &TrainConfig { learning_rate: 0.0, ..tc }).unwrap();
    assert_eq!(frozen.0.weights(), m.weights());
}

#[test]
fn early_stopping_returns_best_checkpoint() {
    let cfg = tiny_config();
    let clips = separable_clips(16, cfg.input, 3);
    let val = separable_clips(8, cfg.input, 4);
    let m = init_model(&cfg, 0).unwrap();
    let tc = TrainConfig { epochs: 15, batch_size: 4, learning_rate: 5e-2, patience: 2, ..TrainConfig::default() };
    let (best, report) = train(&m, &clips, Some(&val), &tc).unwrap();
    let losses: Vec<f64> = report.history.iter().map(|e| e.val_loss.unwrap()).collect();
    let min_epoch = losses.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0 + 1;
    assert_eq!(report.best_epoch, min_epoch);
    // replaying to the best epoch reproduces the checkpoint
    let (replay, _) = train(&m, &clips, None, &TrainConfig { epochs: min_epoch, ..tc }).unwrap();
    assert_eq!(replay.weights(), best.weights());
}

#[test]
fn single_class_rejected() {
    let cfg = tiny_config();
    let clips: Vec<Clip> = separable_clips(8, cfg.input, 5).into_iter().filter(|c| c.label == Some(ClipLabel::RA)).collect();
    let m = init_model(&cfg, 0).unwrap();
    assert!(matches!(train(&m, &clips, None, &TrainConfig::default()), Err(Error::Training(_))));
}

#[test]
fn divergence_reports_step() {
    let cfg = tiny_config();
    let mut clips = separable_clips(4, cfg.input, 6);
    clips[1].data[0] = f32::NAN;
    let m = init_model(&cfg, 0).unwrap();
    let tc = TrainConfig { batch_size: 1, ..TrainConfig::default() };
    match train(&m, &clips, None, &tc) {
        Err(Error::Divergence { step, .. }) => assert!(step >= 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn cross_validation_folds_are_patient_disjoint() {
    use crate::windowing::CuratedClip;
    let cfg = tiny_config();
    let clips: Vec<CuratedClip> = separable_clips(18, cfg.input, 7)
        .into_iter()
        .enumerate()
        .map(|(i, c)| CuratedClip { patient_id: format!("p{}", i / 2), clip: quantize(&c) })
        .collect();
    let tc = TrainConfig { epochs: 2, batch_size: 4, ..TrainConfig::default() };
    let r = cross_validate(&cfg, &clips, 3, &tc, 1).unwrap();
    assert_eq!(r.folds.len(), 3);
    let mut seen: Vec<String> = r.folds.iter().flat_map(|f| f.test_patients.clone()).collect();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 9);
    assert_eq!(r.folds.iter().map(|f| f.n_test).sum::<usize>(), 18);
    assert!(r.folds.iter().all(|f| f.n_train + f.n_test == 18));
}

fn quantize(c: &Clip) -> crate::windowing::PackedClip {
    let q: Vec<f32> = c.data.iter().map(|&v| (v * 255.0).round().min(255.0) / 255.0).collect();
    Clip { data: q, ..c.clone() }.pack().unwrap()
}
