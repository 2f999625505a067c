//! Choice of the regularization strength that brings RMLE closest to the
//! Bayes-optimal estimator.
//!
//! The Bayes-optimal error does not depend on `λ`, so minimizing the gap is
//! minimizing the RMLE error itself. The search runs in `χ`, where each
//! evaluation is a single state-evolution fixed point, and maps the optimum
//! back through `λ(χ)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambda_chi::{chi_from_lambda, Branch};
use crate::metrics::{ge_from_order_params, mse_from_order_params};
use crate::params::{Estimator, ModelParams};
use crate::quadrature::GaussHermite;
use crate::roots::golden_min;
use crate::state_evolution::{lambda_from_chi, se_fixed_point, OrderParams, SeOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mse,
    Ge,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Ge => "ge",
        }
    }

    pub fn of(self, op: &OrderParams, params: &ModelParams) -> Result<f64> {
        match self {
            Metric::Mse => Ok(mse_from_order_params(op.k, op.v, params.lambda0)),
            Metric::Ge => ge_from_order_params(op.k, op.v, params),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(Metric::Mse),
            "ge" => Ok(Metric::Ge),
            other => Err(Error::InvalidParams(format!("unknown metric '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningOptions {
    /// Search window for `1/λ`.
    pub inv_lambda_range: (f64, f64),
    pub coarse_points: usize,
    /// Golden-section tolerance in `χ`.
    pub chi_tol: f64,
    /// Error variation below which the curve counts as flat.
    pub flat_tol: f64,
    pub se: SeOptions,
}

impl Default for TuningOptions {
    fn default() -> Self {
        TuningOptions {
            inv_lambda_range: (0.01, 1.2),
            coarse_points: 48,
            chi_tol: 1e-7,
            flat_tol: 1e-9,
            se: SeOptions {
                eps: 1e-12,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub chi: f64,
    pub lambda: f64,
    pub k: f64,
    pub v: f64,
    pub mse: f64,
    pub ge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalLambda {
    pub metric: Metric,
    /// `None` when the error curve is flat.
    pub lambda_star: Option<f64>,
    pub chi_star: f64,
    pub error_at_star: f64,
    pub bo_error: f64,
    pub curve: Vec<CurvePoint>,
    /// More than one local minimum on the coarse curve.
    pub non_unimodal: bool,
    pub flat: bool,
    /// `λ(χ)` strictly decreasing across the curve.
    pub monotone: bool,
}

impl OptimalLambda {
    pub fn inv_lambda_star(&self) -> Option<f64> {
        self.lambda_star.map(|l| 1.0 / l)
    }

    /// `(ε_RMLE - ε_BO) / ε_BO`.
    pub fn relative_gap(&self) -> f64 {
        (self.error_at_star - self.bo_error) / self.bo_error
    }
}

/// Fixed point and errors of the informed branch at `chi`.
pub fn curve_point(params: &ModelParams, chi: f64, opts: &SeOptions, rule: &GaussHermite) -> Result<Option<CurvePoint>> {
    let fp = se_fixed_point(params, chi, OrderParams::informed(chi, params.lambda0), opts, rule)?;
    if !fp.converged {
        return Ok(None);
    }
    let lambda = match lambda_from_chi(params, chi, &fp.op, rule) {
        Ok(l) if l > 0.0 => l,
        Ok(_) | Err(Error::Singular { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let ge = ge_from_order_params(fp.op.k, fp.op.v, params).unwrap_or(f64::NAN);
    Ok(Some(CurvePoint {
        chi,
        lambda,
        k: fp.op.k,
        v: fp.op.v,
        mse: mse_from_order_params(fp.op.k, fp.op.v, params.lambda0),
        ge,
    }))
}

fn pick(metric: Metric, p: &CurvePoint) -> f64 {
    match metric {
        Metric::Mse => p.mse,
        Metric::Ge => p.ge,
    }
}

/// Errors of the Bayes estimator at `λ = λ0`.
pub fn bo_reference(params: &ModelParams, opts: &SeOptions, rule: &GaussHermite) -> Result<CurvePoint> {
    let bo = ModelParams {
        estimator: Estimator::Bayes,
        lambda: params.lambda0,
        ..*params
    };
    let chi = chi_from_lambda(&bo, bo.lambda0, Branch::Informed, opts, rule)?;
    curve_point(&bo, chi, opts, rule)?
        .ok_or_else(|| Error::NoConvergence { what: "Bayes-optimal fixed point", iterations: opts.max_iter, residual: f64::NAN })
}

/// RMLE errors at a given `λ` through the `λ`–`χ` map.
pub fn rmle_at_lambda(params: &ModelParams, lambda: f64, opts: &SeOptions, rule: &GaussHermite) -> Result<CurvePoint> {
    let p = ModelParams {
        estimator: Estimator::Rmle,
        lambda,
        ..*params
    };
    let chi = chi_from_lambda(&p, lambda, Branch::Informed, opts, rule)?;
    curve_point(&p, chi, opts, rule)?
        .ok_or_else(|| Error::NoConvergence { what: "RMLE fixed point", iterations: opts.max_iter, residual: f64::NAN })
}

/// Minimizes the RMLE error over `1/λ` in `opts.inv_lambda_range`.
pub fn search_optimal_lambda(params: &ModelParams, metric: Metric, opts: &TuningOptions, rule: &GaussHermite) -> Result<OptimalLambda> {
    params.validate()?;
    let p = params.with_estimator(Estimator::Rmle);
    let (inv_lo, inv_hi) = opts.inv_lambda_range;
    let chi_lo = chi_from_lambda(&p, 1.0 / inv_lo, Branch::Informed, &opts.se, rule)?;
    let chi_hi = chi_from_lambda(&p, 1.0 / inv_hi, Branch::Informed, &opts.se, rule)?;
    if !(chi_hi > chi_lo) {
        return Err(Error::OutOfRange(format!(
            "lambda-chi map is not increasing over the window ({chi_lo}, {chi_hi})"
        )));
    }

    let n = opts.coarse_points.max(3);
    let mut curve = Vec::with_capacity(n);
    for i in 0..n {
        let chi = chi_lo + (chi_hi - chi_lo) * i as f64 / (n - 1) as f64;
        if let Some(pt) = curve_point(&p, chi, &opts.se, rule)? {
            if pick(metric, &pt).is_finite() {
                curve.push(pt);
            }
        }
    }
    if curve.len() < 3 {
        return Err(Error::Degenerate("too few usable points on the error curve".into()));
    }
    let monotone = curve.windows(2).all(|w| w[1].lambda < w[0].lambda);
    let values: Vec<f64> = curve.iter().map(|pt| pick(metric, pt)).collect();
    let (i_min, _) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let local_minima = (0..values.len())
        .filter(|&i| {
            let left = i == 0 || values[i] < values[i - 1];
            let right = i + 1 == values.len() || values[i] < values[i + 1];
            left && right
        })
        .count();
    let hi_v = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let flat = hi_v - values[i_min] < opts.flat_tol;
    let bo = bo_reference(params, &opts.se, rule)?;
    let bo_error = pick(metric, &bo);

    if flat {
        let best = curve[i_min];
        return Ok(OptimalLambda {
            metric,
            lambda_star: None,
            chi_star: best.chi,
            error_at_star: pick(metric, &best),
            bo_error,
            curve,
            non_unimodal: local_minima > 1,
            flat,
            monotone,
        });
    }

    let a = curve[i_min.saturating_sub(1)].chi;
    let b = curve[(i_min + 1).min(curve.len() - 1)].chi;
    let (chi_star, _) = golden_min(
        |chi| {
            Ok(match curve_point(&p, chi, &opts.se, rule)? {
                Some(pt) => pick(metric, &pt),
                None => f64::INFINITY,
            })
        },
        a,
        b,
        opts.chi_tol,
    )?;
    let star = curve_point(&p, chi_star, &opts.se, rule)?.unwrap_or(curve[i_min]);
    Ok(OptimalLambda {
        metric,
        lambda_star: Some(star.lambda),
        chi_star: star.chi,
        error_at_star: pick(metric, &star),
        bo_error,
        curve,
        non_unimodal: local_minima > 1,
        flat,
        monotone,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub snr: f64,
    pub inv_lambda_star: Option<f64>,
    pub rmle_error: f64,
    pub bo_error: f64,
    pub rel_gap: f64,
    pub flat: bool,
}

/// Optimal-RMLE and Bayes-optimal errors across `snrs`, realized as
/// `λ0 = 1`, `σ² = 1/SNR`.
pub fn gap_curves(params: &ModelParams, snrs: &[f64], metric: Metric, opts: &TuningOptions, rule: &GaussHermite) -> Result<Vec<GapRow>> {
    snrs.iter()
        .map(|&snr| {
            let p = ModelParams {
                lambda0: 1.0,
                sigma2: 1.0 / snr,
                ..*params
            };
            let opt = search_optimal_lambda(&p, metric, opts, rule)?;
            Ok(GapRow {
                snr,
                inv_lambda_star: opt.inv_lambda_star(),
                rmle_error: opt.error_at_star,
                bo_error: opt.bo_error,
                rel_gap: opt.relative_gap(),
                flat: opt.flat,
            })
        })
        .collect()
}
