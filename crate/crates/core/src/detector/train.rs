use std::borrow::Cow;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::net::{self, bce};
use super::{auc, init_model, kfold_split, DetectorConfig, DetectorModel};
use crate::error::{Error, Result};
use crate::windowing::{Clip, ClipLabel, CuratedClip, PackedClip};

/// Anything that can be turned into a labelled clip for training.
pub trait TrainSample: Sync {
    fn label(&self) -> Option<ClipLabel>;
    fn clip(&self) -> Cow<'_, Clip>;
}

impl TrainSample for Clip {
    fn label(&self) -> Option<ClipLabel> {
        self.label
    }
    fn clip(&self) -> Cow<'_, Clip> {
        Cow::Borrowed(self)
    }
}

impl TrainSample for PackedClip {
    fn label(&self) -> Option<ClipLabel> {
        self.label
    }
    fn clip(&self) -> Cow<'_, Clip> {
        Cow::Owned(self.unpack())
    }
}

impl TrainSample for CuratedClip {
    fn label(&self) -> Option<ClipLabel> {
        self.clip.label
    }
    fn clip(&self) -> Cow<'_, Clip> {
        Cow::Owned(self.clip.unpack())
    }
}

impl<T: TrainSample> TrainSample for &T {
    fn label(&self) -> Option<ClipLabel> {
        (*self).label()
    }
    fn clip(&self) -> Cow<'_, Clip> {
        (*self).clip()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Weight on the positive-class loss; `None` uses `#neg / #pos`, at least 1.
    pub pos_weight: Option<f64>,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 0,
            pos_weight: None,
            patience: 6,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.patience > 0
            && self.learning_rate.is_finite()
            && self.learning_rate >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0
            && self.pos_weight.map_or(true, |w| w.is_finite() && w >= 1.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochStats>,
    /// Epoch whose weights were returned (1-based).
    pub best_epoch: usize,
    pub pos_weight: f64,
    pub steps: usize,
    pub stopped_early: bool,
}


fn labels<S: TrainSample>(clips: &[S]) -> Result<Vec<bool>> {
    clips
        .iter()
        .enumerate()
        .map(|(i, c)| {
            c.label()
                .map(ClipLabel::is_positive)
                .ok_or_else(|| Error::Training(format!("clip {i} has no label")))
        })
        .collect()
}

fn mean_loss<S: TrainSample>(model: &DetectorModel, clips: &[S], y: &[bool], pos_weight: f32) -> Result<f64> {
    let losses = clips
        .iter()
        .zip(y)
        .map(|(c, &yi)| Ok(bce(model.logit(&c.clip())?, yi, pos_weight).0 as f64))
        .collect::<Result<Vec<f64>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Adam on class-weighted binary cross-entropy with seeded shuffling.
///
/// With a validation set, training stops after `patience` epochs without a
/// lower validation loss and the best checkpoint is returned; otherwise the
/// final weights are. Single-threaded and deterministic for a given seed.
pub fn train<S: TrainSample>(
    model: &DetectorModel,
    clips: &[S],
    validation: Option<&[S]>,
    tc: &TrainConfig,
) -> Result<(DetectorModel, TrainReport)> {
    tc.validate()?;
    if clips.is_empty() {
        return Err(Error::Training("no training clips".into()));
    }
    let y = labels(clips)?;
    let n_pos = y.iter().filter(|&&v| v).count();
    let n_neg = y.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Training(format!(
            "training needs both labels, got {n_pos} RA and {n_neg} nonRA clips"
        )));
    }
    let val = match validation {
        Some(v) if !v.is_empty() => Some((v, labels(v)?)),
        _ => None,
    };
    let pos_weight = tc.pos_weight.unwrap_or((n_neg as f64 / n_pos as f64).max(1.0));
    let pw = pos_weight as f32;

    let layout = &model.layout;
    let mut current = model.clone();
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let n = current.weights.len();
    let (mut m, mut v) = (vec![0f32; n], vec![0f32; n]);
    let mut grad = vec![0f32; n];
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..clips.len()).collect();
    let mut history = Vec::new();
    let mut step = 0usize;
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=tc.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        for batch in order.chunks(tc.batch_size) {
            step += 1;
            grad.fill(0.0);
            let scale = 1.0 / batch.len() as f32;
            let mut batch_loss = 0.0f64;
            for &i in batch {
                let clip = clips[i].clip();
                current.check_clip(&clip)?;
                let trace = net::forward(layout, &current.weights, &clip.data);
                let (loss, dz) = bce(trace.logit, y[i], pw);
                if !loss.is_finite() {
                    return Err(Error::Divergence { step, loss: loss as f64 });
                }
                batch_loss += loss as f64;
                net::backward(layout, &current.weights, &clip.data, &trace, dz * scale, &mut grad);
            }
            epoch_loss += batch_loss;
            let t = step as i32;
            let c1 = (1.0 - tc.beta1.powi(t)) as f32;
            let c2 = (1.0 - tc.beta2.powi(t)) as f32;
            let (b1, b2, lr, eps) = (tc.beta1 as f32, tc.beta2 as f32, tc.learning_rate as f32, tc.adam_eps as f32);
            for (((w, &g), mi), vi) in current.weights.iter_mut().zip(&grad).zip(&mut m).zip(&mut v) {
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                let upd = (*mi / c1) / ((*vi / c2).sqrt() + eps);
                *w -= lr * upd;
            }
            if current.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::Divergence { step, loss: batch_loss / batch.len() as f64 });
            }
        }
        let train_loss = epoch_loss / clips.len() as f64;
        let val_loss = match &val {
            Some((vc, vy)) => Some(mean_loss(&current, vc, vy, pw)?),
            None => None,
        };
        debug!("epoch {epoch}: train loss {train_loss:.5}, validation loss {val_loss:?}");
        history.push(EpochStats { epoch, train_loss, val_loss });
        if let Some(vl) = val_loss {
            if vl < best.0 {
                best = (vl, current.clone(), epoch);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= tc.patience {
                    stopped_early = epoch < tc.epochs;
                    break;
                }
            }
        }
    }
    let (model_out, best_epoch) = if val.is_some() {
        (best.1, best.2)
    } else {
        (current, history.len())
    };
    Ok((
        model_out,
        TrainReport {
            history,
            best_epoch,
            pos_weight,
            steps: step,
            stopped_early,
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_patients: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    /// `None` when the held-out fold lacks one of the classes.
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub mean_auc: Option<f64>,
}

/// Patient-grouped k-fold cross-validation. Folds train in parallel and are
/// reported in fold order.
pub fn cross_validate(
    config: &DetectorConfig,
    clips: &[CuratedClip],
    k: usize,
    tc: &TrainConfig,
    seed: u64,
) -> Result<CvReport> {
    let mut patients: Vec<String> = clips.iter().map(|c| c.patient_id.clone()).collect();
    patients.sort();
    patients.dedup();
    let folds = kfold_split(&patients, k, seed)?;
    let results = folds
        .par_iter()
        .enumerate()
        .map(|(f, test_ids)| {
            let (test, train_set): (Vec<&CuratedClip>, Vec<&CuratedClip>) =
                clips.iter().partition(|c| test_ids.contains(&c.patient_id));
            let model = init_model(config, tc.seed)?;
            let (model, _) = train(&model, &train_set, None, tc)?;
            let scores = test
                .iter()
                .map(|c| {
                    let label = c.clip.label.ok_or_else(|| Error::Training("unlabelled clip".into()))?;
                    Ok((model.logit(&c.clip.unpack())? as f64, label.is_positive()))
                })
                .collect::<Result<Vec<_>>>()?;
            let fold_auc = auc(&scores).ok();
            info!("fold {}: {} test clips, AUC {fold_auc:?}", f + 1, test.len());
            Ok(FoldResult {
                fold: f + 1,
                test_patients: test_ids.clone(),
                n_train: train_set.len(),
                n_test: test.len(),
                auc: fold_auc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aucs: Vec<f64> = results.iter().filter_map(|r| r.auc).collect();
    let mean_auc = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
    Ok(CvReport {
        folds: results,
        mean_auc,
    })
}
