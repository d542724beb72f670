use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DELTA: f64 = 1.35;
pub const OSA_THRESHOLD: f64 = 15.0;
const REL_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;

/// Robust linear map from RA ratio (events/hour) to AHI.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AhiModel {
    pub slope: f64,
    pub intercept: f64,
    pub delta: f64,
    pub osa_threshold: f64,
}

impl AhiModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !self.slope.is_finite() || !self.intercept.is_finite() || !self.osa_threshold.is_finite() {
            return Err(Error::Config(format!("invalid AHI model {self:?}")));
        }
        Ok(())
    }
}

/// Huber objective: quadratic for residuals within `delta`, linear beyond.
pub fn huber_objective(xs: &[f64], ys: &[f64], slope: f64, intercept: f64, delta: f64) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = (y - slope * x - intercept).abs();
            if r <= delta {
                0.5 * r * r
            } else {
                delta * (r - 0.5 * delta)
            }
        })
        .sum()
}

fn weighted_ls(xs: &[f64], ys: &[f64], w: &[f64]) -> Result<(f64, f64)> {
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for ((&x, &y), &wi) in xs.iter().zip(ys).zip(w) {
        sw += wi;
        sx += wi * x;
        sy += wi * y;
    }
    let (mx, my) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for ((&x, &y), &wi) in xs.iter().zip(ys).zip(w) {
        sxx += wi * (x - mx) * (x - mx);
        sxy += wi * (x - mx) * (y - my);
    }
    let scale = xs.iter().map(|x| (x - mx).abs()).fold(0.0, f64::max).max(1.0);
    if !(sxx > 1e-12 * sw * scale * scale) {
        return Err(Error::Rank("weighted design matrix is singular".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Exact minimiser of the Huber objective for a fixed split of residuals
/// into quadratic (`|r| <= delta`) and linear ones. `None` when fewer than
/// two distinct ratios fall in the quadratic part.
fn active_set_step(xs: &[f64], ys: &[f64], slope: f64, intercept: f64, delta: f64) -> Option<(f64, f64)> {
    let (mut n, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut gx, mut g1) = (0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let r = y - slope * x - intercept;
        if r.abs() <= delta {
            n += 1.0;
            sx += x;
            sxx += x * x;
            sy += y;
            sxy += x * y;
        } else {
            gx += delta * r.signum() * x;
            g1 += delta * r.signum();
        }
    }
    let det = n * sxx - sx * sx;
    if !(det > 1e-12 * n * n * (1.0 + sxx / n.max(1.0))) {
        return None;
    }
    let (bx, b1) = (sxy + gx, sy + g1);
    Some(((n * bx - sx * b1) / det, (sxx * b1 - sx * bx) / det))
}

fn same_split(xs: &[f64], ys: &[f64], a: (f64, f64), b: (f64, f64), delta: f64) -> bool {
    let class = |(s, c): (f64, f64), x: f64, y: f64| {
        let r = y - s * x - c;
        if r > delta {
            1
        } else if r < -delta {
            -1
        } else {
            0
        }
    };
    xs.iter().zip(ys).all(|(&x, &y)| class(a, x, y) == class(b, x, y))
}

/// Fits `y ≈ slope·x + intercept` under the Huber loss, starting from
/// ordinary least squares.
///
/// Each iteration tries the exact step for the current inlier/outlier split
/// and falls back to a reweighted least-squares step when that would raise
/// the objective. A step that leaves the split unchanged is the minimiser.
pub fn fit_huber(xs: &[f64], ys: &[f64], delta: f64) -> Result<AhiModel> {
    if xs.len() != ys.len() {
        return Err(Error::Validation(format!("{} ratios but {} AHI values", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(Error::Validation(format!("need at least 3 points, got {}", xs.len())));
    }
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta must be positive, got {delta}")));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite fitting data".into()));
    }
    if xs.iter().all(|&x| x == xs[0]) {
        return Err(Error::Rank("all RA ratios are equal".into()));
    }
    let n = xs.len();
    let mut w = vec![1.0; n];
    let (mut slope, mut intercept) = weighted_ls(xs, ys, &w)?;
    let mut change = f64::INFINITY;
    let done = |slope, intercept| AhiModel {
        slope,
        intercept,
        delta,
        osa_threshold: OSA_THRESHOLD,
    };
    for _ in 0..MAX_ITER {
        let current = huber_objective(xs, ys, slope, intercept, delta);
        let exact = active_set_step(xs, ys, slope, intercept, delta)
            .filter(|&(s, b)| huber_objective(xs, ys, s, b, delta) <= current);
        let (s, b) = match exact {
            Some(step) if same_split(xs, ys, (slope, intercept), step, delta) => return Ok(done(step.0, step.1)),
            Some(step) => step,
            None => {
                for i in 0..n {
                    let r = (ys[i] - slope * xs[i] - intercept).abs();
                    w[i] = if r <= delta { 1.0 } else { delta / r };
                }
                weighted_ls(xs, ys, &w)?
            }
        };
        change = (s - slope).abs().max((b - intercept).abs());
        let size = slope.abs().max(intercept.abs()).max(1.0);
        slope = s;
        intercept = b;
        if change <= REL_TOL * size {
            return Ok(done(slope, intercept));
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITER,
        slope,
        intercept,
        change,
    })
}

/// `max(0, slope·ratio + intercept)`.
pub fn predict_ahi(model: &AhiModel, ratio: f64) -> f64 {
    (model.slope * ratio + model.intercept).max(0.0)
}

pub fn classify_osa(model: &AhiModel, ahi: f64) -> bool {
    ahi >= model.osa_threshold
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        (sxy / sxx, my - sxy / sxx * mx)
    }

    /// Coarse-to-fine grid search of the Huber objective.
    fn grid_min(xs: &[f64], ys: &[f64], delta: f64, start: (f64, f64)) -> (f64, f64) {
        let (mut s, mut b) = start;
        let (mut rs, mut rb) = (4.0, 20.0);
        while rs > 1e-7 {
            let mut best = (huber_objective(xs, ys, s, b, delta), s, b);
            for i in -20..=20 {
                for j in -20..=20 {
                    let (cs, cb) = (s + rs * i as f64 / 20.0, b + rb * j as f64 / 20.0);
                    let v = huber_objective(xs, ys, cs, cb, delta);
                    if v < best.0 {
                        best = (v, cs, cb);
                    }
                }
            }
            s = best.1;
            b = best.2;
            rs /= 4.0;
            rb /= 4.0;
        }
        (s, b)
    }

    #[test]
    fn exact_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let m = fit_huber(&xs, &ys, DEFAULT_DELTA).unwrap();
        assert!((m.slope - 2.0).abs() < 1e-6 && (m.intercept - 1.0).abs() < 1e-6);
        for (&x, &y) in xs.iter().zip(&ys) {
            assert!((predict_ahi(&m, x) - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn outliers_pull_ols_more() {
        let mut xs: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let mut ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        xs.extend([3.0, 5.0]);
        ys.extend([100.0, 100.0]);
        let m = fit_huber(&xs, &ys, DEFAULT_DELTA).unwrap();
        let (so, _) = ols(&xs, &ys);
        assert!((m.slope - 2.0).abs() < (so - 2.0).abs());
        let (gs, gb) = grid_min(&xs, &ys, DEFAULT_DELTA, ols(&xs, &ys));
        assert!((m.slope - gs).abs() < 1e-3 && (m.intercept - gb).abs() < 1e-3);
    }

    #[test]
    fn matches_grid_search_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..25 {
            let n = rng.gen_range(5..15);
            let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
            let ys: Vec<f64> = xs
                .iter()
                .map(|x| 1.5 * x + 3.0 + rng.gen_range(-2.0..2.0) + if rng.gen_bool(0.15) { 25.0 } else { 0.0 })
                .collect();
            let m = fit_huber(&xs, &ys, DEFAULT_DELTA).unwrap();
            let (gs, gb) = grid_min(&xs, &ys, DEFAULT_DELTA, ols(&xs, &ys));
            assert!((m.slope - gs).abs() < 1e-3 && (m.intercept - gb).abs() < 1e-3, "{m:?} vs {gs} {gb}");
        }
    }

    // Residuals far above delta: plain reweighting crawls here.
    #[test]
    fn converges_when_most_residuals_are_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..25 {
            let n = rng.gen_range(10..40);
            let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..30.0)).collect();
            let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + rng.gen_range(-12.0..12.0)).collect();
            let m = fit_huber(&xs, &ys, DEFAULT_DELTA).unwrap();
            let (gs, gb) = grid_min(&xs, &ys, DEFAULT_DELTA, ols(&xs, &ys));
            let best = huber_objective(&xs, &ys, gs, gb, DEFAULT_DELTA);
            assert!(huber_objective(&xs, &ys, m.slope, m.intercept, DEFAULT_DELTA) <= best + 1e-9);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(fit_huber(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], 1.35), Err(Error::Rank(_))));
        assert!(matches!(fit_huber(&[1.0, 2.0], &[1.0, 2.0], 1.35), Err(Error::Validation(_))));
    }

    #[test]
    fn prediction_and_classification() {
        let m = AhiModel { slope: 2.0, intercept: 1.0, delta: DEFAULT_DELTA, osa_threshold: OSA_THRESHOLD };
        assert_eq!(predict_ahi(&m, 5.0), 11.0);
        assert_eq!(predict_ahi(&AhiModel { intercept: -30.0, ..m }, 5.0), 0.0);
        assert!(classify_osa(&m, 15.0));
        assert!(!classify_osa(&m, 14.99));
        assert!(!classify_osa(&m, 0.0));
    }

    proptest! {
        #[test]
        fn large_delta_is_ols(seed in any::<u64>(), n in 3usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..20.0)).collect();
            let ys: Vec<f64> = xs.iter().map(|x| 0.7 * x + rng.gen_range(-5.0..5.0)).collect();
            prop_assume!(xs.iter().any(|&x| (x - xs[0]).abs() > 1e-3));
            let m = fit_huber(&xs, &ys, 1e9).unwrap();
            let (s, b) = ols(&xs, &ys);
            prop_assert!((m.slope - s).abs() <= 1e-4 && (m.intercept - b).abs() <= 1e-4);
        }

        #[test]
        fn osa_decision_monotone_in_ratio(slope in 0.01f64..10.0, intercept in -20.0f64..20.0, a in 0.0f64..50.0, b in 0.0f64..50.0) {
            let m = AhiModel { slope, intercept, delta: 1.35, osa_threshold: 15.0 };
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(classify_osa(&m, predict_ahi(&m, lo)) <= classify_osa(&m, predict_ahi(&m, hi)));
        }
    }
}
