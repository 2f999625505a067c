//! Estimation and prediction errors.

use ndarray::{Array1, ArrayView1};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{stream_rng, streams};
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::potentials::gaussian_tail_q;

/// Errors implied by one pair of order parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mse: f64,
    pub ge: f64,
    pub k: f64,
    pub v: f64,
    /// Decision offset `(σ²/2) ln(ρ/(1-ρ))`.
    pub b: f64,
}

impl ErrorReport {
    pub fn new(k: f64, v: f64, params: &ModelParams) -> Result<Self> {
        Ok(ErrorReport {
            mse: mse_from_order_params(k, v, params.lambda0),
            ge: ge_from_order_params(k, v, params)?,
            k,
            v,
            b: params.decision_offset(),
        })
    }
}

/// `(k - 1)²/λ0 + v`, the per-coordinate squared error `‖ŵ - w0‖²/N`.
pub fn mse_from_order_params(k: f64, v: f64, lambda0: f64) -> f64 {
    (k - 1.0) * (k - 1.0) / lambda0 + v
}

/// `‖ŵ - w0‖² / N` measured directly.
pub fn mse_direct(w_hat: ArrayView1<f64>, w0: ArrayView1<f64>) -> f64 {
    let diff = &w_hat - &w0;
    diff.dot(&diff) / w0.len() as f64
}

/// Probability of mislabeling a fresh sample,
/// `ρ Q((k/λ0 + b)/s) + (1-ρ) Q((k/λ0 - b)/s)` with `s = √(σ²(k²/λ0 + v))`.
///
/// `k = v = 0` is rejected: the limit depends on the direction of approach
/// whenever `ρ ≠ ½`.
pub fn ge_from_order_params(k: f64, v: f64, params: &ModelParams) -> Result<f64> {
    let spread = (params.sigma2 * (k * k / params.lambda0 + v)).sqrt();
    if !(spread > 0.0) {
        return Err(Error::Degenerate(format!(
            "generalization error undefined at k={k}, v={v}"
        )));
    }
    let rho = params.rho;
    let b = params.decision_offset();
    let m = k / params.lambda0;
    let mut ge = 0.0;
    if rho > 0.0 {
        ge += rho * gaussian_tail_q((m + b) / spread);
    }
    if rho < 1.0 {
        ge += (1.0 - rho) * gaussian_tail_q((m - b) / spread);
    }
    Ok(ge)
}

/// `sign(ŵ·x/√N + b)`, with an exact zero mapped to +1.
pub fn predict_label(w_hat: ArrayView1<f64>, x_new: ArrayView1<f64>, params: &ModelParams) -> Result<i8> {
    if w_hat.is_empty() {
        return Err(Error::Degenerate("empty weight vector".into()));
    }
    if w_hat.len() != x_new.len() {
        return Err(Error::DimensionMismatch {
            expected: w_hat.len(),
            got: x_new.len(),
        });
    }
    let score = w_hat.dot(&x_new) / (w_hat.len() as f64).sqrt() + params.decision_offset();
    Ok(if score >= 0.0 { 1 } else { -1 })
}

/// Empirical `¼ E[(y - ŷ)²]` of [`predict_label`] over `n_samples` fresh
/// draws from the model centered at `w0`. Returns `(rate, standard error)`.
pub fn monte_carlo_prediction_error(
    w_hat: ArrayView1<f64>,
    w0: ArrayView1<f64>,
    params: &ModelParams,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_samples == 0 {
        return Err(Error::InvalidParams("need at least one sample".into()));
    }
    let n = w0.len();
    let mut rng = stream_rng(seed, streams::FRESH_SAMPLES);
    let sigma = params.sigma2.sqrt();
    let scale = 1.0 / (n as f64).sqrt();
    let mut x = Array1::<f64>::zeros(n);
    let mut loss = 0.0;
    for _ in 0..n_samples {
        let y: i8 = if rng.random::<f64>() < params.rho { 1 } else { -1 };
        for (xj, &wj) in x.iter_mut().zip(w0) {
            let xi: f64 = rng.sample(StandardNormal);
            *xj = f64::from(y) * wj * scale + sigma * xi;
        }
        let y_hat = predict_label(w_hat, x.view(), params)?;
        let d = f64::from(y - y_hat);
        loss += 0.25 * d * d;
    }
    let rate = loss / n_samples as f64;
    Ok((rate, (rate * (1.0 - rate) / n_samples as f64).sqrt()))
}
