//! One module per experiment. Every experiment is a pure function of the
//! config: cells run on the ambient rayon pool, results are collected in cell
//! order and only then turned into tables.

use ssl_gmm_core::ModelParams;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{LabError, LabResult};
use crate::output::ExperimentOutput;

pub mod amp_vs_se;
pub mod gd_vs_amp;
pub mod heatmap;
pub mod lambda_chi;
pub mod phase;
pub mod tuning;

pub fn dispatch(cfg: &ExperimentConfig) -> LabResult<ExperimentOutput> {
    match cfg.experiment {
        ExperimentKind::AmpVsSe => amp_vs_se::run(cfg),
        ExperimentKind::GdVsAmp => gd_vs_amp::run(cfg),
        ExperimentKind::LambdaChi => lambda_chi::run(cfg),
        ExperimentKind::PhaseDiagram => phase::run(cfg),
        ExperimentKind::MseHeatmap => heatmap::run(cfg),
        ExperimentKind::OptimalLambda => tuning::run_optimal(cfg),
        ExperimentKind::GeCurve => tuning::run_gap_curves(cfg),
    }
}

/// `(α_l, α_u)` pairs: the two grids are zipped, a single value broadcasts,
/// and a missing grid falls back to the model value.
pub fn alpha_pairs(cfg: &ExperimentConfig) -> LabResult<Vec<(f64, f64)>> {
    let al = cfg.grid_or("alpha_l", cfg.model.alpha_l)?;
    let au = cfg.grid_or("alpha_u", cfg.model.alpha_u)?;
    match (al.len(), au.len()) {
        (0, _) | (_, 0) => Ok(vec![]),
        (1, _) => Ok(au.iter().map(|&u| (al[0], u)).collect()),
        (_, 1) => Ok(al.iter().map(|&l| (l, au[0])).collect()),
        (a, b) if a == b => Ok(al.into_iter().zip(au).collect()),
        (a, b) => Err(LabError::Config(format!(
            "alpha_l and alpha_u grids are zipped and need equal lengths, got {a} and {b}"
        ))),
    }
}

pub fn with_alphas(base: &ModelParams, rho: f64, alpha_l: f64, alpha_u: f64) -> ModelParams {
    ModelParams {
        rho,
        alpha_l,
        alpha_u,
        ..*base
    }
}

/// Compact cell label used in task names.
pub fn cell_name(parts: &[(&str, f64)]) -> String {
    parts
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",")
}

pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if i + 1 < n {
                sorted[i] + frac * (sorted[i + 1] - sorted[i])
            } else {
                sorted[n - 1]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&xs, 0.5), 3.0);
        assert_eq!(quantile(&xs, 0.25), 2.0);
        assert_eq!(quantile(&xs, 0.1), 1.4);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_and_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        assert!(mean_and_stderr(&[1.0]).1.is_nan());
    }
}
