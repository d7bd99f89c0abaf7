use serde::Serialize;

use crate::error::{Error, Result};
use crate::measurement::curve::DecayCurve;
use crate::measurement::engine::P_FLOOR;

/// Least-squares fit of `ln P(t) = intercept − tau_inv·t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentialFit {
    pub tau_inv: f64,
    /// Intercept of `ln P`, so `P(0) ≈ exp(intercept)`.
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub const MIN_FIT_POINTS: usize = 5;

/// Fits the curve points with `t_lo ≤ t ≤ t_hi` and `P > P_FLOOR`.
///
/// Points are weighted by `(P/stderr)²` when the curve carries standard
/// errors (zero errors are floored at the smallest positive one) and
/// uniformly otherwise.
pub fn fit_exponential(curve: &DecayCurve, window: (f64, f64)) -> Result<ExponentialFit> {
    let (lo, hi) = window;
    if !(lo <= hi) {
        return Err(Error::Fit(format!("empty window [{lo}, {hi}]")));
    }
    let in_window: Vec<usize> = (0..curve.len())
        .filter(|&i| curve.times[i] >= lo && curve.times[i] <= hi)
        .collect();
    if !in_window.is_empty() && in_window.iter().all(|&i| curve.nondecay_prob[i] <= 0.0) {
        return Err(Error::Fit(
            "all probabilities in the window are zero".into(),
        ));
    }
    let idx: Vec<usize> = in_window
        .into_iter()
        .filter(|&i| curve.nondecay_prob[i] > P_FLOOR)
        .collect();
    if idx.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "{} usable points in window, need at least {MIN_FIT_POINTS}",
            idx.len()
        )));
    }

    let rel_err: Vec<f64> = idx
        .iter()
        .map(|&i| curve.stderr[i] / curve.nondecay_prob[i])
        .collect();
    let floor = rel_err
        .iter()
        .cloned()
        .filter(|e| *e > 0.0)
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = if floor.is_finite() {
        rel_err.iter().map(|e| 1.0 / e.max(floor).powi(2)).collect()
    } else {
        vec![1.0; idx.len()]
    };

    let xs: Vec<f64> = idx.iter().map(|&i| curve.times[i]).collect();
    let ys: Vec<f64> = idx.iter().map(|&i| curve.nondecay_prob[i].ln()).collect();
    let sw: f64 = weights.iter().sum();
    let xm = weights.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = weights.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for ((w, x), y) in weights.iter().zip(&xs).zip(&ys) {
        sxx += w * (x - xm) * (x - xm);
        sxy += w * (x - xm) * (y - ym);
        syy += w * (y - ym) * (y - ym);
    }
    if !(sxx > 0.0) {
        return Err(Error::Fit("window points share a single time".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_res: f64 = weights
        .iter()
        .zip(&xs)
        .zip(&ys)
        .map(|((w, x), y)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(ExponentialFit {
        tau_inv: -slope,
        intercept,
        r_squared,
        points: idx.len(),
    })
}
