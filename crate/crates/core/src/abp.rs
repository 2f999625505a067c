//! Belief propagation with full edge messages, the `O(N M_u)`-memory
//! precursor of AMP. Only intended as a small-N cross-check.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::amp::{initial_state, AmpInit, AmpOptions, DIVERGENCE_RATIO};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::potentials::kernel_pair;

#[derive(Debug, Clone, PartialEq)]
pub struct AbpState {
    /// `ŵ_{i→ν}`, stored as `[ν, i]`.
    pub w_hat_edges: Array2<f64>,
    /// `p̃_{ν→i}`, stored as `[ν, i]`.
    pub p_tilde_edges: Array2<f64>,
    /// `S_ν = (χ/σ⁴N) Σ_i x_νi²`, the field variance seen by sample `ν`.
    pub s_per_sample: Array1<f64>,
    pub chi: f64,
    /// Full marginal means `ŵ_i`.
    pub w_hat: Array1<f64>,
    pub iter: usize,
    pub converged: bool,
    pub rel_change_history: Vec<f64>,
}

impl AbpState {
    /// `(1/M_u) Σ_ν ŵ_{i→ν}`.
    pub fn edge_mean(&self) -> Array1<f64> {
        self.w_hat_edges
            .mean_axis(Axis(0))
            .unwrap_or_else(|| self.w_hat.clone())
    }
}

/// Runs edge-message BP at fixed `chi`, starting every cavity mean from the
/// same vector AMP would start from.
pub fn run_abp(d: &Dataset, params: &ModelParams, chi: f64, init: AmpInit, opts: &AmpOptions) -> Result<AbpState> {
    params.validate()?;
    if !(chi > 0.0) {
        return Err(Error::InvalidParams(format!("chi must be positive, got {chi}")));
    }
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidParams(format!("eps must be positive, got {}", opts.eps)));
    }
    let n = d.n_dim();
    let m_u = d.m_unlabeled();
    let s2 = params.sigma2;
    let sqrt_n = (n as f64).sqrt();
    let x = &d.x_unlabeled;
    let labeled = d.labeled_sum();
    let pre = chi / (s2 * sqrt_n);

    let start = initial_state(d, params, chi, &init)?.w_hat;
    let mut w_edges = Array2::zeros((m_u, n));
    for mut row in w_edges.outer_iter_mut() {
        row.assign(&start);
    }
    let s_per_sample = x.map_axis(Axis(1), |r| chi * r.dot(&r) / (s2 * s2 * n as f64));

    let mut state = AbpState {
        w_hat_edges: w_edges,
        p_tilde_edges: Array2::zeros((m_u, n)),
        s_per_sample,
        chi,
        w_hat: start,
        iter: 0,
        converged: false,
        rel_change_history: Vec::new(),
    };
    let mut f_edges = Array2::<f64>::zeros((m_u, n));

    for _ in 0..opts.max_iter {
        // Sample-to-coordinate: cavity fields exclude coordinate i.
        for (nu, (mut p_row, w_row)) in state
            .p_tilde_edges
            .outer_iter_mut()
            .zip(state.w_hat_edges.outer_iter())
            .enumerate()
        {
            let x_row = x.row(nu);
            let full = x_row.dot(&w_row) / (s2 * sqrt_n);
            Zip::from(&mut p_row)
                .and(&x_row)
                .and(&w_row)
                .for_each(|p, &xv, &wv| *p = full - xv * wv / (s2 * sqrt_n));
            let t = state.s_per_sample[nu];
            for (f, &p) in f_edges.row_mut(nu).iter_mut().zip(p_row.iter()) {
                *f = kernel_pair(params.estimator, p, t, params.rho)?.0;
            }
        }

        // Coordinate-to-sample: cavity means exclude sample ν.
        let mut totals = labeled.clone();
        Zip::from(x.rows()).and(f_edges.rows()).for_each(|x_row, f_row| {
            Zip::from(&mut totals)
                .and(&x_row)
                .and(&f_row)
                .for_each(|acc, &xv, &fv| *acc += xv * fv);
        });
        Zip::from(state.w_hat_edges.rows_mut())
            .and(x.rows())
            .and(f_edges.rows())
            .for_each(|mut w_row, x_row, f_row| {
                Zip::from(&mut w_row)
                    .and(&totals)
                    .and(&x_row)
                    .and(&f_row)
                    .for_each(|w, &tot, &xv, &fv| *w = pre * (tot - xv * fv));
            });
        let w_new = totals * pre;

        let diff = &w_new - &state.w_hat;
        let norm_diff = diff.dot(&diff).sqrt();
        let rel = if norm_diff == 0.0 { 0.0 } else { norm_diff / w_new.dot(&w_new).sqrt() };
        state.iter += 1;
        if !w_new.iter().all(|v: &f64| v.is_finite()) || !(rel <= DIVERGENCE_RATIO) {
            return Err(Error::Divergence {
                iteration: state.iter,
                detail: format!("edge messages: relative change {rel:e}"),
            });
        }
        state.w_hat = w_new;
        state.rel_change_history.push(rel);
        if rel < opts.eps {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}
