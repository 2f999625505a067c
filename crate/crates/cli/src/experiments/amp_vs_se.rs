//! Per-iteration order parameters of AMP on sampled data against the state
//! evolution prediction started from the same macroscopic point.

use rayon::prelude::*;
use serde_json::json;
use ssl_gmm_core::amp::AmpOptions;
use ssl_gmm_core::state_evolution::se_trajectory;
use ssl_gmm_core::{generate_dataset, run_amp, AmpInit, GaussHermite, ModelParams, OrderParams};

use super::{alpha_pairs, cell_name, mean_and_stderr, with_alphas};
use crate::config::{AmpInitKind, ExperimentConfig};
use crate::error::{LabError, LabResult};
use crate::output::{fmt, ExperimentOutput, Table, TaskStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub params: ModelParams,
    pub chi: f64,
}

impl Cell {
    pub fn name(&self) -> String {
        format!(
            "{}:{}",
            self.params.estimator.as_str(),
            cell_name(&[
                ("rho", self.params.rho),
                ("alpha_l", self.params.alpha_l),
                ("alpha_u", self.params.alpha_u),
                ("chi", self.chi),
            ])
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub cell: Cell,
    pub n_seeds: usize,
    pub failed_seeds: Vec<(u64, String)>,
    /// Indexed by iteration, `0` being the start.
    pub amp_k: Vec<(f64, f64)>,
    pub amp_v: Vec<(f64, f64)>,
    pub se: Vec<OrderParams>,
}

impl Comparison {
    /// `(amp mean - se) / standard error`, per iteration.
    pub fn z_scores(&self) -> Vec<(f64, f64)> {
        let z = |(m, s): (f64, f64), target: f64| {
            let d = m - target;
            if d == 0.0 {
                0.0
            } else {
                d / s
            }
        };
        self.se
            .iter()
            .enumerate()
            .map(|(t, op)| (z(self.amp_k[t], op.k), z(self.amp_v[t], op.v)))
            .collect()
    }

    /// Largest `|z|` over iterations `1..` (the start is matched by construction).
    pub fn max_abs_z(&self) -> (f64, f64) {
        self.z_scores()
            .iter()
            .skip(1)
            .fold((0.0f64, 0.0f64), |acc, &(a, b)| (acc.0.max(a.abs()), acc.1.max(b.abs())))
    }
}

pub fn resolve_init(kind: AmpInitKind, params: &ModelParams) -> AmpInitKind {
    match kind {
        AmpInitKind::Auto if params.alpha_l > 0.0 => AmpInitKind::Supervised,
        AmpInitKind::Auto => AmpInitKind::Aligned,
        k => k,
    }
}

/// AMP trajectory of `(k_t, v_t)` for one seed, padded with the final value
/// up to `iterations` sweeps when AMP converges early.
pub fn amp_trajectory(
    params: &ModelParams,
    chi: f64,
    seed: u64,
    iterations: usize,
    eps: f64,
    init: AmpInitKind,
    overlap: f64,
) -> LabResult<Vec<OrderParams>> {
    let d = generate_dataset(params, seed)?;
    let init = match resolve_init(init, params) {
        AmpInitKind::Zero => AmpInit::Zero,
        AmpInitKind::Supervised => AmpInit::Supervised,
        AmpInitKind::Aligned | AmpInitKind::Auto => AmpInit::Given(&d.w0 * overlap),
    };
    let state = run_amp(&d, params, chi, init, &AmpOptions { eps, max_iter: iterations })?;
    let mut hist = state.order_history;
    let last = *hist.last().expect("initial point recorded");
    hist.resize(iterations + 1, last);
    Ok(hist)
}

/// Runs AMP over `seeds` and state evolution from the seed-averaged start.
pub fn compare_cell(cfg: &ExperimentConfig, cell: Cell, seeds: &[u64], rule: &GaussHermite) -> LabResult<Comparison> {
    let t_max = cfg.iterations;
    let runs: Vec<(u64, LabResult<Vec<OrderParams>>)> = seeds
        .par_iter()
        .map(|&s| {
            let r = amp_trajectory(&cell.params, cell.chi, s, t_max, cfg.eps_amp, cfg.amp_init, cfg.init_overlap);
            (s, r)
        })
        .collect();
    let mut ok = Vec::new();
    let mut failed_seeds = Vec::new();
    for (s, r) in runs {
        match r {
            Ok(h) => ok.push(h),
            Err(e) => failed_seeds.push((s, e.to_string())),
        }
    }
    if ok.is_empty() {
        let detail = failed_seeds.first().map(|(_, e)| e.clone()).unwrap_or_default();
        return Err(LabError::AllFailed(detail));
    }
    let column = |t: usize, f: fn(&OrderParams) -> f64| -> Vec<f64> { ok.iter().map(|h| f(&h[t])).collect() };
    let amp_k: Vec<(f64, f64)> = (0..=t_max).map(|t| mean_and_stderr(&column(t, |o| o.k))).collect();
    let amp_v: Vec<(f64, f64)> = (0..=t_max).map(|t| mean_and_stderr(&column(t, |o| o.v))).collect();
    let init = OrderParams::new(cell.chi, amp_k[0].0, amp_v[0].0, cell.params.lambda0);
    let se = se_trajectory(&cell.params, cell.chi, init, t_max, rule)?;
    Ok(Comparison {
        cell,
        n_seeds: ok.len(),
        failed_seeds,
        amp_k,
        amp_v,
        se,
    })
}

pub fn cells(cfg: &ExperimentConfig) -> LabResult<Vec<Cell>> {
    let mut out = Vec::new();
    for est in cfg.estimator_list() {
        for rho in cfg.grid_or("rho", cfg.model.rho)? {
            for (al, au) in alpha_pairs(cfg)? {
                for chi in cfg.grid_or("chi", 0.3)? {
                    let params = with_alphas(&cfg.model, rho, al, au).with_estimator(est);
                    out.push(Cell { params, chi });
                }
            }
        }
    }
    Ok(out)
}

pub fn run(cfg: &ExperimentConfig) -> LabResult<ExperimentOutput> {
    let rule = cfg.rule();
    let seeds = cfg.seed_list();
    let mut out = ExperimentOutput::default();
    let mut table = Table::new(
        "amp_vs_se.csv",
        &[
            "estimator", "rho", "alpha_l", "alpha_u", "chi", "n_dim", "iter", "n_seeds", "amp_k_mean", "amp_k_se",
            "amp_v_mean", "amp_v_se", "se_k", "se_v", "z_k", "z_v",
        ],
    );
    let mut cells_summary = Vec::new();
    for cell in cells(cfg)? {
        let name = cell.name();
        let res = compare_cell(cfg, cell, &seeds, &rule);
        out.tasks.push(TaskStatus::from_result(&name, &res));
        let Ok(cmp) = res else { continue };
        for (s, e) in &cmp.failed_seeds {
            out.tasks.push(TaskStatus::failed(format!("{name}:seed={s}"), e));
        }
        let p = &cmp.cell.params;
        for (t, (z_k, z_v)) in cmp.z_scores().into_iter().enumerate() {
            table.push(vec![
                p.estimator.as_str().into(),
                fmt(p.rho),
                fmt(p.alpha_l),
                fmt(p.alpha_u),
                fmt(cmp.cell.chi),
                p.n_dim.to_string(),
                t.to_string(),
                cmp.n_seeds.to_string(),
                fmt(cmp.amp_k[t].0),
                fmt(cmp.amp_k[t].1),
                fmt(cmp.amp_v[t].0),
                fmt(cmp.amp_v[t].1),
                fmt(cmp.se[t].k),
                fmt(cmp.se[t].v),
                fmt(z_k),
                fmt(z_v),
            ]);
        }
        let (zk, zv) = cmp.max_abs_z();
        let last = cmp.se.len() - 1;
        cells_summary.push(json!({
            "cell": name,
            "n_seeds": cmp.n_seeds,
            "max_abs_z_k": zk,
            "max_abs_z_v": zv,
            "final_amp_k": cmp.amp_k[last].0,
            "final_se_k": cmp.se[last].k,
            "final_amp_v": cmp.amp_v[last].0,
            "final_se_v": cmp.se[last].v,
        }));
    }
    out.tables.push(table);
    out.summary.insert("cells".into(), cells_summary.into());
    Ok(out)
}
