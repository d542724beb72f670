//! Clip-level RA classifier: a small (2+1)D convolutional network.
//!
//! Each block runs a per-frame k×k spatial convolution, a per-pixel
//! temporal convolution, SiLU and average pooling. A global spatiotemporal
//! average feeds a one-hidden-layer head that emits a single logit. Tensors
//! are laid out `[channel][time][row][col]`.

mod io;
mod metrics;
mod net;
pub mod precise;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::windowing::{Clip, WindowPlan};

pub use io::{load_model, read_model, save_model, write_model, MODEL_FORMAT, MODEL_VERSION};
pub use metrics::{auc, kfold_split};
pub use net::Segment;
pub use train::{
    cross_validate, train, CvReport, EpochStats, FoldResult, TrainConfig, TrainReport, TrainSample,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl InputDims {
    pub fn for_plan(plan: &WindowPlan) -> Self {
        Self {
            frames: plan.diffs_per_clip(),
            height: plan.clip_h,
            width: plan.clip_w,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub channels: usize,
    pub spatial_kernel: usize,
    pub spatial_stride: usize,
    pub temporal_kernel: usize,
    pub temporal_stride: usize,
    /// Average-pool extent (and stride) along time.
    pub pool_t: usize,
    /// Average-pool extent (and stride) along both spatial axes.
    pub pool_s: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub input: InputDims,
    pub blocks: Vec<BlockConfig>,
    pub head_hidden: usize,
    /// Constant factor applied to the input. Typical differences sit near
    /// 0.03, which would leave every SiLU in its linear range.
    pub input_gain: f64,
    /// Upper bound on the parameter count times two bytes.
    pub param_budget_bytes: usize,
}

pub const DEFAULT_PARAM_BUDGET_BYTES: usize = 6_000_000;
pub const DEFAULT_INPUT_GAIN: f64 = 32.0;

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::for_input(InputDims::for_plan(&WindowPlan::default()))
    }
}

impl DetectorConfig {
    /// The default four-block network for a given input size.
    pub fn for_input(input: InputDims) -> Self {
        let block = |channels, k, s, kt, st, pool_t, pool_s| BlockConfig {
            channels,
            spatial_kernel: k,
            spatial_stride: s,
            temporal_kernel: kt,
            temporal_stride: st,
            pool_t,
            pool_s,
        };
        Self {
            input,
            blocks: vec![
                block(4, 4, 4, 3, 2, 1, 2),
                block(8, 3, 1, 3, 1, 2, 2),
                block(16, 3, 1, 3, 1, 2, 2),
                block(32, 3, 1, 3, 1, 1, 1),
            ],
            head_hidden: 16,
            input_gain: DEFAULT_INPUT_GAIN,
            param_budget_bytes: DEFAULT_PARAM_BUDGET_BYTES,
        }
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(net::Layout::new(self)?.n_params)
    }

    /// Checks shapes and the 16-bit storage budget.
    pub fn validate(&self) -> Result<()> {
        if !(self.input_gain.is_finite() && self.input_gain > 0.0) {
            return Err(Error::Config(format!("input gain must be positive, got {}", self.input_gain)));
        }
        let n = self.param_count()?;
        if n * 2 > self.param_budget_bytes {
            return Err(Error::Config(format!(
                "{n} parameters need {} bytes at 16 bits, over the {} byte budget",
                n * 2,
                self.param_budget_bytes
            )));
        }
        Ok(())
    }
}

/// Network weights plus the configuration that shapes them.
#[derive(Clone, Debug)]
pub struct DetectorModel {
    config: DetectorConfig,
    layout: net::Layout,
    weights: Vec<f32>,
}

impl PartialEq for DetectorModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.weights == other.weights
    }
}

impl DetectorModel {
    pub fn from_weights(config: DetectorConfig, weights: Vec<f32>) -> Result<Self> {
        config.validate()?;
        let layout = net::Layout::new(&config)?;
        if weights.len() != layout.n_params {
            return Err(Error::Shape(format!(
                "{} weights for a model with {} parameters",
                weights.len(),
                layout.n_params
            )));
        }
        Ok(Self {
            config,
            layout,
            weights,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn param_count(&self) -> usize {
        self.layout.n_params
    }

    pub fn segments(&self) -> &[Segment] {
        &self.layout.segments
    }

    pub fn segment(&self, name: &str) -> Option<&[f32]> {
        self.layout
            .segments
            .iter()
            .find(|s| s.name == name)
            .map(|s| &self.weights[s.offset..s.offset + s.len])
    }

    fn check_clip(&self, clip: &Clip) -> Result<()> {
        let d = &self.config.input;
        if (clip.frames, clip.height, clip.width) != (d.frames, d.height, d.width) {
            return Err(Error::Shape(format!(
                "clip is {}x{}x{}, model expects {}x{}x{}",
                clip.frames, clip.height, clip.width, d.frames, d.height, d.width
            )));
        }
        Ok(())
    }

    pub fn logit(&self, clip: &Clip) -> Result<f32> {
        self.check_clip(clip)?;
        Ok(net::forward(&self.layout, &self.weights, &clip.data).logit)
    }

    /// RA probability, kept strictly inside `(0, 1)`.
    pub fn predict(&self, clip: &Clip) -> Result<f64> {
        self.logit(clip).map(probability)
    }

    /// Scores clips in parallel; output order follows input order.
    pub fn predict_many(&self, clips: &[Clip]) -> Result<Vec<f64>> {
        clips.par_iter().map(|c| self.predict(c)).collect()
    }
}

/// Logistic function in double precision, clamped to the open unit interval.
pub fn probability(logit: f32) -> f64 {
    let p = 1.0 / (1.0 + (-(logit as f64)).exp());
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Fan-in scaled uniform initialisation; biases start at zero.
pub fn init_model(config: &DetectorConfig, seed: u64) -> Result<DetectorModel> {
    config.validate()?;
    let layout = net::Layout::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = vec![0f32; layout.n_params];
    for seg in &layout.segments {
        if seg.name.ends_with("bias") {
            continue;
        }
        let fan_in: usize = seg.shape[1..].iter().product();
        // He scaling where a SiLU or an average pool follows; the output layer is linear
        let gain = if seg.name == "head.out" { 3.0 } else { 6.0 };
        let bound = (gain / fan_in as f64).sqrt() as f32;
        let dist = Uniform::new_inclusive(-bound, bound);
        for w in &mut weights[seg.offset..seg.offset + seg.len] {
            *w = dist.sample(&mut rng);
        }
    }
    DetectorModel::from_weights(config.clone(), weights)
}

/// RA probability of one clip.
pub fn forward(model: &DetectorModel, clip: &Clip) -> Result<f64> {
    model.predict(clip)
}

#[cfg(test)]
mod tests;
