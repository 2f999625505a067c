//! Approximate message passing at a fixed susceptibility `χ`.
//!
//! One sweep updates the per-sample fields
//! `p̃_ν = (1/σ²√N) Σ_j x_νj ŵ_j - (χ/σ⁴N) (Σ_j x_νj²) F(p̃_ν^prev)`
//! and then the estimate
//! `ŵ_i = (χ/σ²√N) [Σ_μ y_μ x_μi + Σ_m x_mi F(p̃_m) - (ŵ_i/σ²√N) Σ_m x_mi² T(p̃_m)]`,
//! with `(F, T)` the kernels of the configured estimator evaluated at
//! `t = χ/σ²`.

use ndarray::{Array1, ArrayView1, Zip};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{stream_rng, streams, Dataset};
use crate::error::{Error, Result};
use crate::params::{Estimator, ModelParams};
use crate::potentials::kernel_pair;
use crate::state_evolution::OrderParams;

/// Relative changes above this abort the run as divergent.
pub const DIVERGENCE_RATIO: f64 = 1e6;

/// Scale of the random start used when no labeled data exist.
pub const RANDOM_INIT_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub enum AmpInit {
    Zero,
    /// `ŵ = (χ/σ²√N) Σ_μ y_μ x_μ`, or a small random vector without labels.
    Supervised,
    Given(Array1<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmpOptions {
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for AmpOptions {
    fn default() -> Self {
        AmpOptions {
            eps: 1e-8,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    pub w_hat: Array1<f64>,
    pub p_tilde: Array1<f64>,
    pub chi: f64,
    /// `F(p̃)` from the previous sweep, feeding the next memory term.
    pub f_cache: Array1<f64>,
    pub iter: usize,
    pub converged: bool,
    /// `‖ŵ^{t+1} - ŵ^t‖ / ‖ŵ^{t+1}‖` per sweep.
    pub rel_change_history: Vec<f64>,
    /// Measured `(k, v)` after every sweep, starting with the initial state.
    pub order_history: Vec<OrderParams>,
}

/// Data-dependent constants reused by every sweep.
struct Problem<'a> {
    d: &'a Dataset,
    params: &'a ModelParams,
    chi: f64,
    labeled_sum: Array1<f64>,
    row_sq: Array1<f64>,
}

impl<'a> Problem<'a> {
    fn new(d: &'a Dataset, params: &'a ModelParams, chi: f64) -> Result<Self> {
        params.validate()?;
        if !(chi > 0.0 && chi.is_finite()) {
            return Err(Error::InvalidParams(format!("chi must be positive, got {chi}")));
        }
        let row_sq = d.x_unlabeled.map_axis(ndarray::Axis(1), |r| r.dot(&r));
        Ok(Problem {
            d,
            params,
            chi,
            labeled_sum: d.labeled_sum(),
            row_sq,
        })
    }

    fn sweep(&self, state: &mut AmpState) -> Result<()> {
        let n = self.d.n_dim() as f64;
        let s2 = self.params.sigma2;
        let sqrt_n = n.sqrt();
        let t = self.chi / s2;
        let x = &self.d.x_unlabeled;

        let mut p = x.dot(&state.w_hat) / (s2 * sqrt_n);
        if state.iter > 0 {
            let memory = self.chi / (s2 * s2 * n);
            Zip::from(&mut p)
                .and(&self.row_sq)
                .and(&state.f_cache)
                .for_each(|p, &r, &f| *p -= memory * r * f);
        }

        let mut f = Array1::zeros(p.len());
        let mut tv = Array1::zeros(p.len());
        for ((pv, fv), tvv) in p.iter().zip(f.iter_mut()).zip(tv.iter_mut()) {
            let (a, b) = kernel_pair(self.params.estimator, *pv, t, self.params.rho)?;
            *fv = a;
            *tvv = b;
        }

        // `Xᵀ F` and the Onsager weights `Σ_μ x_μi² T_μ` in one row-major pass.
        let mut onsager = Array1::<f64>::zeros(state.w_hat.len());
        let mut field = Array1::<f64>::zeros(state.w_hat.len());
        {
            let fl = field.as_slice_mut().expect("owned vector is contiguous");
            let on = onsager.as_slice_mut().expect("owned vector is contiguous");
            for ((row, &tm), &fm) in x.outer_iter().zip(&tv).zip(&f) {
                let row = row.to_slice().expect("dataset rows are contiguous");
                for ((a, b), &xv) in fl.iter_mut().zip(on.iter_mut()).zip(row) {
                    *a += xv * fm;
                    *b += xv * xv * tm;
                }
            }
        }
        let pre = self.chi / (s2 * sqrt_n);
        let mut w_new = Array1::zeros(state.w_hat.len());
        Zip::from(&mut w_new)
            .and(&self.labeled_sum)
            .and(&field)
            .and(&onsager)
            .and(&state.w_hat)
            .for_each(|w, &l, &fld, &o, &w_old| *w = pre * (l + fld - w_old * o / (s2 * sqrt_n)));

        let diff = &w_new - &state.w_hat;
        let norm_new = w_new.dot(&w_new).sqrt();
        let norm_diff = diff.dot(&diff).sqrt();
        let rel = if norm_diff == 0.0 { 0.0 } else { norm_diff / norm_new };
        state.iter += 1;
        if !w_new.iter().all(|v: &f64| v.is_finite()) || !(rel <= DIVERGENCE_RATIO) {
            return Err(Error::Divergence {
                iteration: state.iter,
                detail: format!("relative change {rel:e}"),
            });
        }
        state.w_hat = w_new;
        state.p_tilde = p;
        state.f_cache = f;
        state.rel_change_history.push(rel);
        state.order_history.push(measure(&state.w_hat, self.d, self.chi)?);
        Ok(())
    }
}

fn measure(w_hat: &Array1<f64>, d: &Dataset, chi: f64) -> Result<OrderParams> {
    order_params_of(w_hat.view(), d.w0.view(), chi)
}

/// `k = ŵ·w0 / ‖w0‖²`, `v = (1/N) ‖ŵ - k w0‖²`; `ṽ` uses the empirical
/// signal variance of `w0`.
pub fn order_params_of(w_hat: ArrayView1<f64>, w0: ArrayView1<f64>, chi: f64) -> Result<OrderParams> {
    if w_hat.len() != w0.len() {
        return Err(Error::DimensionMismatch {
            expected: w0.len(),
            got: w_hat.len(),
        });
    }
    let w0_sq = w0.dot(&w0);
    if !(w0_sq > 0.0) {
        return Err(Error::Degenerate("true center has zero norm".into()));
    }
    let n = w0.len() as f64;
    let k = w_hat.dot(&w0) / w0_sq;
    let v = w_hat
        .iter()
        .zip(w0)
        .map(|(w, w0)| (w - k * w0) * (w - k * w0))
        .sum::<f64>()
        / n;
    Ok(OrderParams {
        chi,
        k,
        v,
        v_tilde: k * k * w0_sq / n + v,
        iter: 0,
    })
}

/// Order parameters of the current estimate.
pub fn order_params_from_state(state: &AmpState, d: &Dataset) -> Result<OrderParams> {
    let mut op = measure(&state.w_hat, d, state.chi)?;
    op.iter = state.iter;
    Ok(op)
}

/// Initial state for [`run_amp`].
pub fn initial_state(d: &Dataset, params: &ModelParams, chi: f64, init: &AmpInit) -> Result<AmpState> {
    let n = d.n_dim();
    let w_hat = match init {
        AmpInit::Zero => Array1::zeros(n),
        AmpInit::Given(w) => {
            if w.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: w.len() });
            }
            w.clone()
        }
        AmpInit::Supervised if d.m_labeled() > 0 => {
            d.labeled_sum() * (chi / (params.sigma2 * (n as f64).sqrt()))
        }
        AmpInit::Supervised => {
            let mut rng = stream_rng(d.seed, streams::SOLVER_INIT);
            (0..n)
                .map(|_| RANDOM_INIT_SCALE * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
    };
    let m_u = d.m_unlabeled();
    let f0 = kernel_pair(params.estimator, 0.0, chi / params.sigma2, params.rho)?.0;
    let first = measure(&w_hat, d, chi)?;
    Ok(AmpState {
        w_hat,
        p_tilde: Array1::zeros(m_u),
        chi,
        f_cache: Array1::from_elem(m_u, f0),
        iter: 0,
        converged: false,
        rel_change_history: Vec::new(),
        order_history: vec![first],
    })
}

/// Iterates AMP sweeps until the relative change of `ŵ` drops below
/// `opts.eps` or `opts.max_iter` sweeps have run.
pub fn run_amp(d: &Dataset, params: &ModelParams, chi: f64, init: AmpInit, opts: &AmpOptions) -> Result<AmpState> {
    if !(opts.eps > 0.0) {
        return Err(Error::InvalidParams(format!("eps must be positive, got {}", opts.eps)));
    }
    let problem = Problem::new(d, params, chi)?;
    let mut state = initial_state(d, params, chi, &init)?;
    for _ in 0..opts.max_iter {
        problem.sweep(&mut state)?;
        if *state.rel_change_history.last().expect("one sweep ran") < opts.eps {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Single sweep with the RMLE kernels.
pub fn amp_step_rmle(state: &AmpState, d: &Dataset, params: &ModelParams) -> Result<AmpState> {
    let p = params.with_estimator(Estimator::Rmle);
    let mut next = state.clone();
    Problem::new(d, &p, state.chi)?.sweep(&mut next)?;
    Ok(next)
}

/// Single sweep with the Bayes kernels.
pub fn amp_step_bayes(state: &AmpState, d: &Dataset, params: &ModelParams) -> Result<AmpState> {
    let p = params.with_estimator(Estimator::Bayes);
    let mut next = state.clone();
    Problem::new(d, &p, state.chi)?.sweep(&mut next)?;
    Ok(next)
}
