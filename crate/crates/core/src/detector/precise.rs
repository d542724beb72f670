//! Double-precision evaluation of the detector network, for numerical checks.

use super::net::{self, Layout};
use super::DetectorConfig;
use crate::error::{Error, Result};

fn check(layout: &Layout, weights: &[f64], input: &[f64]) -> Result<()> {
    if weights.len() != layout.n_params || input.len() != layout.input_len() {
        return Err(Error::Shape(format!(
            "expected {} weights and {} inputs, got {} and {}",
            layout.n_params,
            layout.input_len(),
            weights.len(),
            input.len()
        )));
    }
    Ok(())
}

pub fn logit(config: &DetectorConfig, weights: &[f64], input: &[f64]) -> Result<f64> {
    let layout = Layout::new(config)?;
    check(&layout, weights, input)?;
    Ok(net::forward(&layout, weights, input).logit)
}

/// Training loss of one clip and its gradient with respect to every weight.
pub fn loss_and_gradient(
    config: &DetectorConfig,
    weights: &[f64],
    input: &[f64],
    positive: bool,
    pos_weight: f64,
) -> Result<(f64, Vec<f64>)> {
    let layout = Layout::new(config)?;
    check(&layout, weights, input)?;
    let trace = net::forward(&layout, weights, input);
    let (loss, dz) = net::bce(trace.logit, positive, pos_weight);
    let mut grad = vec![0.0; weights.len()];
    net::backward(&layout, weights, input, &trace, dz, &mut grad);
    Ok((loss, grad))
}

/// The loss alone, for finite differences.
pub fn loss(config: &DetectorConfig, weights: &[f64], input: &[f64], positive: bool, pos_weight: f64) -> Result<f64> {
    let z = logit(config, weights, input)?;
    Ok(net::bce(z, positive, pos_weight).0)
}
