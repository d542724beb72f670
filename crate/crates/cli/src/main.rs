use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use slaction::detector::{
    auc, cross_validate, init_model, kfold_split, load_model, save_model, train, DetectorConfig, InputDims,
    TrainConfig,
};
use slaction::diffing::{event_ldp_stats, stats_to_csv, LdpThreshold, StatsMode};
use slaction::estimator::{
    calibrate_theta, fit_huber, merge_windows_to_events, ra_ratio, save_ahi_model, scores_to_csv, DEFAULT_DELTA, DEFAULT_THETA,
};
use slaction::runtime::{
    analyze_night, benchmark, configure_threads, window_scores, projected_8h_s, Mode, PipelineConfig, REFERENCE_8H_S,
    REFERENCE_TOTAL_S,
};
use slaction::synth::{generate_night, read_manifest, write_cohort, CohortConfig, SynthConfig};
use slaction::video_io::{load_annotations, open_night, EventKind};
use slaction::windowing::{curate_training_clips, read_clip_dir, write_clip_dir, WindowPlan};
use slaction::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser)]
#[command(name = "slaction", version, about = "Respiratory-arousal detection and AHI estimation from sleep video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LdpMode {
    Within,
    Pre,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic night, or a cohort when the config has `n_nights`.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean large-difference-pixel count per event kind, as CSV.
    LdpStats {
        #[arg(long)]
        night: PathBuf,
        /// Annotations to group by; defaults to the night's own.
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        tau: u32,
        #[arg(long, value_enum, default_value = "within")]
        mode: LdpMode,
        /// Pre-event window in seconds.
        #[arg(long, default_value_t = 10.0)]
        window: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select labelled training clips from annotated nights.
    Curate {
        /// Text file with one night directory per line, or a cohort manifest.
        #[arg(long)]
        nights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cross-validate, then train the final detector on every clip.
    Train {
        #[arg(long)]
        clips: PathBuf,
        #[arg(long, default_value_t = 9)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// AUC of a trained detector on a clip directory, per patient fold and pooled.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        clips: PathBuf,
        #[arg(long, default_value_t = 9)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit the RA-ratio to AHI regression on a synthetic cohort.
    FitAhi {
        /// Cohort manifest written by `synth`.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
        /// Choose theta by event-level F1 against the annotated RA onsets instead.
        #[arg(long, conflicts_with = "theta")]
        calibrate: bool,
        #[arg(long, default_value_t = DEFAULT_DELTA)]
        delta: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a night and estimate its AHI.
    Analyze {
        #[arg(long)]
        night: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        ahi_model: PathBuf,
        /// Pace the stream at the source frame rate and count missed deadlines.
        #[arg(long)]
        realtime: bool,
        /// Load every frame first and score clips in parallel.
        #[arg(long, conflicts_with = "realtime")]
        batch: bool,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Time model loading, preprocessing and inference per one-minute clip.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 20)]
        clips: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match configure_threads().map_err(anyhow::Error::from).and_then(|_| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(err) if err.is_config() => EXIT_CONFIG,
        Some(err) if err.is_input_format() || matches!(err, Error::Io { .. }) => EXIT_INPUT,
        Some(_) => EXIT_FAILURE,
        None if e.downcast_ref::<serde_json::Error>().is_some() => EXIT_INPUT,
        None if e.downcast_ref::<std::io::Error>().is_some() => EXIT_INPUT,
        None => EXIT_FAILURE,
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::Io { path: path.to_owned(), source: e })?;
    Ok(())
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_owned(), source: e })?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())).into())
}

fn from_value<T: serde::de::DeserializeOwned>(v: serde_json::Value, path: &Path) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Config(format!("{}: {e}", path.display())).into())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth { config, out } => synth(config.as_deref(), &out),
        Command::LdpStats { night, events, tau, mode, window, out } => {
            let night = open_night(&night)?;
            let events = match events {
                Some(p) => load_annotations(p)?,
                None => night.annotations.clone().context("night has no annotations; pass --events")?,
            };
            let mode = match mode {
                LdpMode::Within => StatsMode::WithinEvent,
                LdpMode::Pre => StatsMode::PreEvent { window_s: window },
            };
            let stats = event_ldp_stats(&night, &events, LdpThreshold::new(tau)?, mode)?;
            write(&out, stats_to_csv(&stats))
        }
        Command::Curate { nights, out, seed } => curate(&nights, &out, seed),
        Command::Train { clips, folds, seed, epochs, batch_size, learning_rate, out } => {
            let clips = read_clip_dir(&clips)?;
            let first = clips.first().ok_or_else(|| Error::Validation("clip directory is empty".into()))?;
            let config = DetectorConfig::for_input(InputDims {
                frames: first.clip.frames,
                height: first.clip.height,
                width: first.clip.width,
            });
            let defaults = TrainConfig::default();
            let tc = TrainConfig {
                epochs: epochs.unwrap_or(defaults.epochs),
                batch_size: batch_size.unwrap_or(defaults.batch_size),
                learning_rate: learning_rate.unwrap_or(defaults.learning_rate),
                seed,
                ..defaults
            };
            if folds >= 2 {
                let cv = cross_validate(&config, &clips, folds, &tc, seed)?;
                for f in &cv.folds {
                    println!("fold {}: train {} test {} AUC {}", f.fold, f.n_train, f.n_test, fmt_auc(f.auc));
                }
                println!("mean AUC {}", fmt_auc(cv.mean_auc));
            }
            let (model, report) = train(&init_model(&config, seed)?, &clips, None, &tc)?;
            info!("final model: {} epochs, {} steps", report.history.len(), report.steps);
            save_model(&model, &out)?;
            Ok(())
        }
        Command::Eval { model, clips, folds, seed } => {
            let model = load_model(&model)?;
            let clips = read_clip_dir(&clips)?;
            let scored = clips
                .iter()
                .map(|c| {
                    let label = c.clip.label.ok_or_else(|| Error::Format("clip without a label".into()))?;
                    Ok((c.patient_id.as_str(), model.logit(&c.clip.unpack())? as f64, label.is_positive()))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut patients: Vec<String> = scored.iter().map(|s| s.0.to_string()).collect();
            patients.sort();
            patients.dedup();
            if folds >= 2 && patients.len() >= folds {
                let mut aucs = Vec::new();
                for (i, fold) in kfold_split(&patients, folds, seed)?.iter().enumerate() {
                    let part: Vec<(f64, bool)> =
                        scored.iter().filter(|s| fold.iter().any(|p| p == s.0)).map(|s| (s.1, s.2)).collect();
                    let a = auc(&part).ok();
                    aucs.extend(a);
                    println!("fold {}: {} clips AUC {}", i + 1, part.len(), fmt_auc(a));
                }
                let mean = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
                println!("mean AUC {}", fmt_auc(mean));
            }
            let pooled: Vec<(f64, bool)> = scored.iter().map(|s| (s.1, s.2)).collect();
            println!("pooled AUC {:.4}", auc(&pooled)?);
            Ok(())
        }
        Command::FitAhi { manifest, model, theta, calibrate, delta, out } => {
            let base = manifest.parent().unwrap_or(Path::new("."));
            let m = read_manifest(&manifest)?;
            let detector = load_model(&model)?;
            let cfg = PipelineConfig::new(&model, &out);
            let window_s = cfg.plan.window_s;
            let mut scored = Vec::new();
            let mut tib = Vec::new();
            let mut ys = Vec::new();
            for entry in &m.nights {
                let dir = entry.dir.as_ref().context("manifest entry without a directory")?;
                let night = open_night(base.join(dir))?;
                let onsets: Vec<f64> = night
                    .annotations
                    .iter()
                    .flatten()
                    .filter(|e| e.kind == EventKind::RA)
                    .map(|e| e.start_s)
                    .collect();
                scored.push((window_scores(&night, &detector, &cfg)?, onsets));
                tib.push(night.meta.tib_h());
                ys.push(entry.truth.true_ahi);
            }
            let theta = if calibrate {
                let mut candidates: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
                candidates.extend([0.97, 0.98, 0.99, 0.995, 0.999]);
                let t = calibrate_theta(&scored, window_s, &candidates)?;
                println!("calibrated theta {t}; pass it to analyze with --theta");
                t
            } else {
                theta
            };
            let mut xs = Vec::new();
            for (((scores, _), tib_h), entry) in scored.iter().zip(&tib).zip(&m.nights) {
                let ratio = ra_ratio(&merge_windows_to_events(scores, theta, window_s), *tib_h)?;
                info!("{}: RA ratio {ratio:.2}, true AHI {:.2}", entry.patient_id, entry.truth.true_ahi);
                xs.push(ratio);
            }
            let fitted = fit_huber(&xs, &ys, delta)?;
            println!("AHI = {:.4} * RA ratio + {:.4}", fitted.slope, fitted.intercept);
            save_ahi_model(&fitted, &out)?;
            Ok(())
        }
        Command::Analyze { night, model, ahi_model, realtime, batch, theta, out, scores } => {
            let cfg = PipelineConfig { theta, realtime, ..PipelineConfig::new(model, ahi_model) };
            let mode = if batch { Mode::Batch } else { Mode::Streaming };
            let a = analyze_night(&night, &cfg, mode)?;
            write(&out, serde_json::to_string_pretty(&a.report)?)?;
            if let Some(p) = scores {
                write(&p, scores_to_csv(&a.scores))?;
            }
            println!(
                "{}: {} windows, {} RA events, RA ratio {:.2}/h, AHI {:.1}, OSA {}",
                a.report.patient_id,
                a.report.n_windows,
                a.report.ra_events.len(),
                a.report.ra_ratio,
                a.report.ahi_estimate,
                if a.report.osa_positive { "positive" } else { "negative" }
            );
            if let Some(m) = a.report.deadline_misses {
                println!("deadline misses: {m}");
            }
            Ok(())
        }
        Command::Bench { model, clips, seed, out } => {
            let r = benchmark(&model, &WindowPlan::default(), clips, seed)?;
            println!("model load        {:.4} s", r.model_load_s);
            println!("preprocess/clip   {:.4} ± {:.4} s", r.per_clip_preprocess_s.mean, r.per_clip_preprocess_s.sd);
            println!("inference/clip    {:.4} ± {:.4} s", r.per_clip_inference_s.mean, r.per_clip_inference_s.sd);
            println!(
                "total/clip        {:.4} ± {:.4} s (reference {REFERENCE_TOTAL_S} s, deadline {} s)",
                r.total_per_clip_s.mean, r.total_per_clip_s.sd, r.step_s
            );
            match r.peak_resident_bytes {
                Some(b) => println!("peak RSS          {:.1} MiB", b as f64 / (1024.0 * 1024.0)),
                None => println!("peak RSS          unavailable"),
            }
            println!("real-time         {}", r.realtime_feasible);
            println!(
                "8 h projection    {:.1} min (reference {:.0} min)",
                projected_8h_s(r.total_per_clip_s.mean) / 60.0,
                REFERENCE_8H_S / 60.0
            );
            if let Some(p) = out {
                write(&p, serde_json::to_string_pretty(&r)?)?;
            }
            Ok(())
        }
    }
}

fn fmt_auc(a: Option<f64>) -> String {
    a.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn synth(config: Option<&Path>, out: &Path) -> Result<()> {
    let value = match config {
        Some(p) => (read_json(p)?, p),
        None => (serde_json::json!({}), Path::new("<default>")),
    };
    if value.0.get("n_nights").is_some() {
        let cfg: CohortConfig = from_value(value.0, value.1)?;
        let m = write_cohort(&cfg, out)?;
        println!("wrote {} nights to {}", m.nights.len(), out.display());
    } else {
        let cfg: SynthConfig = from_value(value.0, value.1)?;
        let truth = generate_night(&cfg, out)?;
        println!(
            "wrote {} to {}: true AHI {:.2}, {} RA",
            cfg.patient_id,
            out.display(),
            truth.true_ahi,
            truth.ra_count
        );
    }
    Ok(())
}

/// Night directories from a manifest or a plain list, resolved against the
/// list's own directory.
fn night_dirs(list: &Path) -> Result<Vec<PathBuf>> {
    let base = list.parent().unwrap_or(Path::new("."));
    let text = std::fs::read_to_string(list).map_err(|e| Error::Io { path: list.to_owned(), source: e })?;
    if text.trim_start().starts_with('{') {
        let m = read_manifest(list)?;
        return m
            .nights
            .iter()
            .map(|n| n.dir.as_ref().map(|d| base.join(d)).context("manifest entry without a directory"))
            .collect();
    }
    let dirs: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect();
    if dirs.is_empty() {
        bail!(Error::Validation(format!("{} lists no nights", list.display())));
    }
    Ok(dirs)
}

fn curate(list: &Path, out: &Path, seed: u64) -> Result<()> {
    let nights = night_dirs(list)?.iter().map(open_night).collect::<slaction::Result<Vec<_>>>()?;
    let cur = curate_training_clips(&nights, &WindowPlan::default(), seed)?;
    write_clip_dir(out, &cur.clips)?;
    println!(
        "{} positive and {} negative clips ({} onsets skipped)",
        cur.positives(),
        cur.negatives(),
        cur.skipped_onsets
    );
    Ok(())
}
