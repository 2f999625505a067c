//! Plain gradient descent on the regularized negative log-likelihood, used
//! as an independent check of the AMP fixed point.
//!
//! With `h = x·w/(σ²√N)` the minimized objective is
//! `(M/(2σ²N) + λ/2)‖w‖² - Σ_labeled y h - Σ_unlabeled ln(ρe^h + (1-ρ)e^{-h})`,
//! i.e. the negative log posterior with every `w`-independent term dropped.

use ndarray::{Array1, Array2, ArrayView1, Zip};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::potentials::{f_tilde, log_mixture};

/// Consecutive objective increases treated as divergence.
pub const DIVERGENCE_PATIENCE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdConfig {
    pub eta: f64,
    pub eps_gd: f64,
    pub max_iter: usize,
    pub lambda: f64,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            eta: 0.1,
            eps_gd: 1e-5,
            max_iter: 100_000,
            lambda: 1.0,
        }
    }
}

impl GdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !(self.eps_gd > 0.0) || !(self.lambda > 0.0) {
            return Err(Error::InvalidParams(format!(
                "gradient descent needs eta, eps_gd, lambda > 0 (got {}, {}, {})",
                self.eta, self.eps_gd, self.lambda
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdOutcome {
    pub w: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective_history: Vec<f64>,
    /// Iterates kept when requested, starting with the initial point.
    pub trajectory: Vec<Array1<f64>>,
}

/// Objective value and gradient at `w`. The regularization strength comes
/// from `params.lambda`.
pub fn objective_and_gradient(w: ArrayView1<f64>, d: &Dataset, params: &ModelParams) -> Result<(f64, Array1<f64>)> {
    let n = d.n_dim();
    if w.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: w.len() });
    }
    let s2 = params.sigma2;
    let scale = 1.0 / (s2 * (n as f64).sqrt());
    let m_total = (d.m_labeled() + d.m_unlabeled()) as f64;
    let quad = 0.5 * (m_total / (s2 * n as f64) + params.lambda);

    let w_sq = w.dot(&w);
    let mut value = quad * w_sq;
    let mut grad = w.to_owned() * (2.0 * quad);

    if d.m_labeled() > 0 {
        let h_l = d.x_labeled.dot(&w) * scale;
        let mut coef = Array1::zeros(h_l.len());
        for ((c, &h), &y) in coef.iter_mut().zip(&h_l).zip(&d.y_labeled) {
            value -= f64::from(y) * h;
            *c = f64::from(y);
        }
        grad.scaled_add(-scale, &transpose_dot(&d.x_labeled, &coef));
    }
    if d.m_unlabeled() > 0 {
        let h_u = d.x_unlabeled.dot(&w) * scale;
        let mut resp = Array1::zeros(h_u.len());
        for (r, &h) in resp.iter_mut().zip(&h_u) {
            value -= log_mixture(h, params.rho);
            *r = f_tilde(h, params.rho);
        }
        grad.scaled_add(-scale, &transpose_dot(&d.x_unlabeled, &resp));
    }
    Ok((value, grad))
}

/// `xᵀc` accumulated row by row, which keeps the reads of a row-major `x`
/// sequential.
fn transpose_dot(x: &Array2<f64>, c: &Array1<f64>) -> Array1<f64> {
    let mut out = Array1::<f64>::zeros(x.ncols());
    let acc = out.as_slice_mut().expect("owned vector is contiguous");
    for (row, &cm) in x.outer_iter().zip(c) {
        let row = row.to_slice().expect("dataset rows are contiguous");
        for (a, &xv) in acc.iter_mut().zip(row) {
            *a += xv * cm;
        }
    }
    out
}

/// Minimizer of the objective when there are no unlabeled rows:
/// `(1/(σ²√N)) Σ y x / (M_l/(σ²N) + λ)`.
pub fn labeled_only_minimizer(d: &Dataset, params: &ModelParams) -> Array1<f64> {
    let n = d.n_dim() as f64;
    let s2 = params.sigma2;
    let denom = d.m_labeled() as f64 / (s2 * n) + params.lambda;
    d.labeled_sum() / (s2 * n.sqrt() * denom)
}

/// Fixed-step descent `w ← w - η ∇` until `‖Δw‖/‖w‖ < eps_gd`.
pub fn run_gd(d: &Dataset, cfg: &GdConfig, params: &ModelParams, init: ArrayView1<f64>, keep_trajectory: bool) -> Result<GdOutcome> {
    cfg.validate()?;
    let p = params.with_lambda(cfg.lambda);
    let mut w = init.to_owned();
    let (mut value, mut grad) = objective_and_gradient(w.view(), d, &p)?;
    let mut history = vec![value];
    let mut trajectory = Vec::new();
    if keep_trajectory {
        trajectory.push(w.clone());
    }
    let mut rising = 0;
    for iter in 1..=cfg.max_iter {
        let mut step_sq = 0.0;
        Zip::from(&mut w).and(&grad).for_each(|wi, &g| {
            let s = cfg.eta * g;
            *wi -= s;
            step_sq += s * s;
        });
        let (v_new, g_new) = objective_and_gradient(w.view(), d, &p)?;
        if !v_new.is_finite() {
            return Err(Error::Divergence {
                iteration: iter,
                detail: "objective is not finite; try a smaller eta".into(),
            });
        }
        rising = if v_new > value { rising + 1 } else { 0 };
        if rising >= DIVERGENCE_PATIENCE {
            return Err(Error::Divergence {
                iteration: iter,
                detail: format!("objective rose for {DIVERGENCE_PATIENCE} consecutive steps; try a smaller eta"),
            });
        }
        value = v_new;
        grad = g_new;
        history.push(value);
        if keep_trajectory {
            trajectory.push(w.clone());
        }
        let norm = w.dot(&w).sqrt();
        let rel = if step_sq == 0.0 { 0.0 } else { step_sq.sqrt() / norm };
        if rel < cfg.eps_gd {
            return Ok(GdOutcome {
                w,
                iterations: iter,
                converged: true,
                objective_history: history,
                trajectory,
            });
        }
    }
    Ok(GdOutcome {
        w,
        iterations: cfg.max_iter,
        converged: false,
        objective_history: history,
        trajectory,
    })
}

/// `‖w_gd - w_amp‖ / ‖w_gd‖`.
pub fn delta_gd_amp(w_gd: ArrayView1<f64>, w_amp: ArrayView1<f64>) -> Result<f64> {
    if w_gd.len() != w_amp.len() {
        return Err(Error::DimensionMismatch {
            expected: w_gd.len(),
            got: w_amp.len(),
        });
    }
    let norm = w_gd.dot(&w_gd).sqrt();
    if !(norm > 0.0) {
        return Err(Error::Degenerate("reference vector has zero norm".into()));
    }
    let diff = &w_gd - &w_amp;
    Ok(diff.dot(&diff).sqrt() / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{dataset_from_parts, generate_dataset};
    use ndarray::{array, Array2};

    fn params(alpha_l: f64, alpha_u: f64, n: usize, lambda: f64) -> ModelParams {
        ModelParams {
            alpha_l,
            alpha_u,
            n_dim: n,
            lambda,
            ..Default::default()
        }
    }

    #[test]
    fn regularizer_only_gradient() {
        let d = dataset_from_parts(
            Array2::zeros((0, 3)),
            vec![],
            Array2::zeros((0, 3)),
            vec![],
            Array1::ones(3),
        )
        .unwrap();
        let w = array![1.0, -2.0, 0.5];
        let (value, grad) = objective_and_gradient(w.view(), &d, &params(0.0, 0.0, 3, 2.0)).unwrap();
        assert_eq!(grad, &w * 2.0);
        assert!((value - 0.5 * 2.0 * w.dot(&w)).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = params(0.5, 1.5, 200, 1.3).with_alpha_u(1.5);
        let p = ModelParams { rho: 0.35, ..p };
        let d = generate_dataset(&p, 21).unwrap();
        let w: Array1<f64> = (0..200).map(|i| ((i * 37) % 17) as f64 / 8.0 - 1.0).collect();
        let (_, grad) = objective_and_gradient(w.view(), &d, &p).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in (0..200).step_by(7) {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += h;
            wm[i] -= h;
            let fd = (objective_and_gradient(wp.view(), &d, &p).unwrap().0
                - objective_and_gradient(wm.view(), &d, &p).unwrap().0)
                / (2.0 * h);
            worst = worst.max((fd - grad[i]).abs() / grad[i].abs().max(1.0));
        }
        assert!(worst < 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn labeled_only_converges_to_ridge_solution() {
        let p = params(1.0, 0.0, 300, 2.0);
        let d = generate_dataset(&p, 2).unwrap();
        let cfg = GdConfig { lambda: 2.0, eps_gd: 1e-10, ..Default::default() };
        let out = run_gd(&d, &cfg, &p, Array1::zeros(300).view(), false).unwrap();
        assert!(out.converged);
        let exact = labeled_only_minimizer(&d, &p);
        assert!(delta_gd_amp(exact.view(), out.w.view()).unwrap() < 1e-8);
        assert!(out.objective_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn oversized_step_is_reported_as_divergence() {
        let p = params(1.0, 1.0, 50, 1.0);
        let d = generate_dataset(&p, 2).unwrap();
        let cfg = GdConfig { eta: 10.0, lambda: 1.0, ..Default::default() };
        let init = Array1::from_elem(50, 0.1);
        assert!(matches!(run_gd(&d, &cfg, &p, init.view(), false), Err(Error::Divergence { .. })));
    }

    #[test]
    fn delta_examples() {
        let a = array![1.0, 2.0, -3.0];
        assert_eq!(delta_gd_amp(a.view(), a.view()).unwrap(), 0.0);
        assert!((delta_gd_amp(a.view(), (&a * 2.0).view()).unwrap() - 1.0).abs() < 1e-15);
        assert!(delta_gd_amp(Array1::zeros(3).view(), a.view()).is_err());
    }
}
