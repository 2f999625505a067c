//! Power-law extrapolation `Δ(N) = Δ0 + a N^{-d}` of finite-size
//! discrepancies, with a bootstrap over replicates.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::stream_rng;
use crate::error::{Error, Result};
use crate::roots::golden_min;

/// Search range for the exponent.
pub const D_RANGE: (f64, f64) = (1e-3, 3.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub delta0: f64,
    pub a: f64,
    pub d: f64,
    /// Sum of squared residuals over the per-N means.
    pub residual: f64,
    pub n_values: Vec<usize>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// The data carry no usable N-dependence; `a` and `d` are meaningless.
    pub degenerate: bool,
    /// Best exponent sits on an end of [`D_RANGE`].
    pub d_at_bound: bool,
    pub bootstrap_samples: Vec<f64>,
}

/// Linear least squares for `(Δ0, a)` at fixed `d`; returns the residual.
fn solve_linear(ns: &[f64], ys: &[f64], d: f64) -> (f64, f64, f64) {
    let m = ns.len() as f64;
    let xs: Vec<f64> = ns.iter().map(|n| n.powf(-d)).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let delta0 = my - a * mx;
    let res = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - delta0 - a * x).powi(2))
        .sum();
    (delta0, a, res)
}

fn fit_means(ns: &[f64], ys: &[f64]) -> Result<(f64, f64, f64, f64, bool, bool)> {
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let spread = ys.iter().map(|y| (y - my).abs()).fold(0.0, f64::max);
    if spread <= 1e-14 * my.abs().max(f64::MIN_POSITIVE) {
        return Ok((my, 0.0, 0.5, 0.0, true, false));
    }
    // Variable projection: (Δ0, a) are linear given d, so only d is searched.
    let (lo, hi) = D_RANGE;
    let grid = 600;
    let mut best = (lo, f64::INFINITY);
    for i in 0..=grid {
        let d = lo + (hi - lo) * i as f64 / grid as f64;
        let (_, _, r) = solve_linear(ns, ys, d);
        if r < best.1 {
            best = (d, r);
        }
    }
    let step = (hi - lo) / grid as f64;
    let (a_br, b_br) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let (d, _) = golden_min(|d| Ok(solve_linear(ns, ys, d).2), a_br, b_br, 1e-13)?;
    let (delta0, a, residual) = solve_linear(ns, ys, d);
    let at_bound = d - lo < 2.0 * step.min(1e-3) || hi - d < 2.0 * step.min(1e-3);
    let degenerate = a.abs() < 1e-14 * spread.max(f64::MIN_POSITIVE);
    Ok((delta0, a, d, residual, degenerate, at_bound))
}

fn means_and_errors(samples: &BTreeMap<usize, Vec<f64>>) -> Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
    let mut ns = Vec::new();
    let mut means = Vec::new();
    let mut errs = Vec::new();
    for (&n, vals) in samples {
        if vals.is_empty() {
            continue;
        }
        let m = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / m;
        let var = if vals.len() > 1 {
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)
        } else {
            0.0
        };
        ns.push(n);
        means.push(mean);
        errs.push((var / m).sqrt());
    }
    if ns.len() < 3 {
        return Err(Error::InvalidParams(format!(
            "power-law fit needs at least 3 distinct N values, got {}",
            ns.len()
        )));
    }
    Ok((ns, means, errs))
}

/// Least-squares fit of `Δ0 + a N^{-d}` to the per-N sample means.
pub fn fit_power_law(samples: &BTreeMap<usize, Vec<f64>>) -> Result<ScalingFit> {
    let (ns, means, std_errors) = means_and_errors(samples)?;
    let nf: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let (delta0, a, d, residual, degenerate, d_at_bound) = fit_means(&nf, &means)?;
    Ok(ScalingFit {
        delta0,
        a,
        d,
        residual,
        n_values: ns,
        means,
        std_errors,
        degenerate,
        d_at_bound,
        bootstrap_samples: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub draws: Vec<f64>,
    /// Resamples whose refit raised an error.
    pub failures: usize,
}

/// Resamples every N's replicates with replacement and refits `Δ0`.
pub fn bootstrap_delta0(samples: &BTreeMap<usize, Vec<f64>>, n_boot: usize, seed: u64) -> Result<BootstrapResult> {
    if n_boot < 100 {
        return Err(Error::InvalidParams(format!("n_boot must be at least 100, got {n_boot}")));
    }
    means_and_errors(samples)?;
    let mut rng = stream_rng(seed, 0);
    let mut draws = Vec::with_capacity(n_boot);
    let mut failures = 0;
    for _ in 0..n_boot {
        let resampled: BTreeMap<usize, Vec<f64>> = samples
            .iter()
            .map(|(&n, vals)| {
                let picked = (0..vals.len()).map(|_| vals[rng.random_range(0..vals.len())]).collect();
                (n, picked)
            })
            .collect();
        match fit_power_law(&resampled) {
            Ok(fit) => draws.push(fit.delta0),
            Err(_) => failures += 1,
        }
    }
    Ok(BootstrapResult { draws, failures })
}

/// Slope of `ln(mean Δ)` against `ln N`.
pub fn log_log_slope(fit: &ScalingFit) -> f64 {
    let xs: Vec<f64> = fit.n_values.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = fit.means.iter().map(|m| m.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn synthetic(delta0: f64, a: f64, d: f64, ns: &[usize], noise: f64, reps: usize, seed: u64) -> BTreeMap<usize, Vec<f64>> {
        let mut rng = stream_rng(seed, 1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        ns.iter()
            .map(|&n| {
                let mean = delta0 + a * (n as f64).powf(-d);
                let vals = (0..reps).map(|_| mean + noise * mean * normal.sample(&mut rng)).collect();
                (n, vals)
            })
            .collect()
    }

    #[test]
    fn recovers_exact_power_law() {
        let s = synthetic(1e-5, 1.0, 0.49, &[500, 1000, 2000, 4000, 8000], 0.0, 1, 0);
        let fit = fit_power_law(&s).unwrap();
        assert!((fit.delta0 - 1e-5).abs() < 5e-9, "delta0 {}", fit.delta0);
        assert!((fit.a - 1.0).abs() < 5e-4);
        assert!((fit.d - 0.49).abs() < 5e-4);
        assert!(!fit.degenerate);
    }

    #[test]
    fn constant_samples_are_degenerate() {
        let s: BTreeMap<usize, Vec<f64>> = [(100, vec![0.2; 5]), (200, vec![0.2; 5]), (400, vec![0.2; 5])].into();
        let fit = fit_power_law(&s).unwrap();
        assert!(fit.degenerate);
        assert!((fit.delta0 - 0.2).abs() < 1e-15);
        let boot = bootstrap_delta0(&s, 100, 3).unwrap();
        assert!(boot.draws.iter().all(|&d| (d - 0.2).abs() < 1e-15));
    }

    #[test]
    fn too_few_sizes_rejected() {
        let s: BTreeMap<usize, Vec<f64>> = [(100, vec![0.2]), (200, vec![0.1])].into();
        assert!(fit_power_law(&s).is_err());
        let s3: BTreeMap<usize, Vec<f64>> = [(100, vec![0.2]), (200, vec![0.1]), (400, vec![0.05])].into();
        assert!(bootstrap_delta0(&s3, 10, 0).is_err());
    }

    #[test]
    fn bootstrap_covers_truth() {
        let s = synthetic(1e-5, 1.0, 0.5, &[1000, 2000, 4000, 8000, 16000, 32000], 0.002, 400, 9);
        let boot = bootstrap_delta0(&s, 200, 5).unwrap();
        let mut draws = boot.draws.clone();
        draws.sort_by(|a, b| a.total_cmp(b));
        let q1 = draws[draws.len() / 4];
        let q3 = draws[3 * draws.len() / 4];
        assert!(q1 <= 1e-5 && 1e-5 <= q3, "IQR [{q1}, {q3}]");
    }
}
