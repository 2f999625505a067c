//! Distance between the gradient-descent minimizer and the AMP fixed point at
//! the `χ` that the `λ`–`χ` map assigns to the same `λ`, its finite-size
//! scaling, and a bootstrap of the extrapolated offset.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde_json::json;
use ssl_gmm_core::amp::{order_params_of, AmpOptions};
use ssl_gmm_core::scaling::{bootstrap_delta0, fit_power_law};
use ssl_gmm_core::{
    chi_from_lambda, delta_gd_amp, generate_dataset, run_amp, run_gd, AmpInit, Branch, Estimator, GdConfig, ModelParams,
    OrderParams,
};

use super::{alpha_pairs, cell_name, quantile, with_alphas};
use crate::config::ExperimentConfig;
use crate::error::{LabError, LabResult};
use crate::output::{fmt, ExperimentOutput, Table, TaskStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replicate {
    pub n_dim: usize,
    pub seed: u64,
    pub delta: f64,
    pub amp_iter: usize,
    pub amp_converged: bool,
    pub gd_iter: usize,
    pub gd_converged: bool,
    pub amp: OrderParams,
    pub gd: OrderParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub amp: Vec<OrderParams>,
    pub gd: Vec<OrderParams>,
}

/// One dataset, one AMP run, one GD run. `params.lambda` is overridden by
/// `gd.lambda` and the estimator is RMLE.
pub fn replicate(
    params: &ModelParams,
    chi: f64,
    seed: u64,
    amp: &AmpOptions,
    gd: &GdConfig,
    keep_trace: bool,
) -> LabResult<(Replicate, Option<Trace>)> {
    let p = params.with_lambda(gd.lambda).with_estimator(Estimator::Rmle);
    let d = generate_dataset(&p, seed)?;
    let state = run_amp(&d, &p, chi, AmpInit::Supervised, amp)?;
    let zero = ndarray::Array1::zeros(d.n_dim());
    let out = run_gd(&d, gd, &p, zero.view(), keep_trace)?;
    let delta = delta_gd_amp(out.w.view(), state.w_hat.view())?;
    let rep = Replicate {
        n_dim: d.n_dim(),
        seed,
        delta,
        amp_iter: state.iter,
        amp_converged: state.converged,
        gd_iter: out.iterations,
        gd_converged: out.converged,
        amp: order_params_of(state.w_hat.view(), d.w0.view(), chi)?,
        gd: order_params_of(out.w.view(), d.w0.view(), chi)?,
    };
    let trace = if keep_trace {
        let gd_hist = out
            .trajectory
            .iter()
            .map(|w| order_params_of(w.view(), d.w0.view(), chi))
            .collect::<Result<Vec<_>, _>>()?;
        Some(Trace {
            amp: state.order_history.clone(),
            gd: gd_hist,
        })
    } else {
        None
    };
    Ok((rep, trace))
}

/// `χ` reproducing `λ` on the informed branch.
pub fn chi_for(params: &ModelParams, lambda: f64, cfg: &ExperimentConfig) -> LabResult<f64> {
    let p = params.with_lambda(lambda).with_estimator(Estimator::Rmle);
    Ok(chi_from_lambda(&p, lambda, Branch::Informed, &cfg.se_options(), &cfg.rule())?)
}

struct Cell {
    params: ModelParams,
    eta: f64,
    eps_gd: f64,
}

impl Cell {
    fn key(&self) -> Vec<String> {
        vec![
            fmt(self.params.rho),
            fmt(self.params.alpha_l),
            fmt(self.params.alpha_u),
            fmt(self.eta),
            fmt(self.eps_gd),
        ]
    }

    fn name(&self) -> String {
        cell_name(&[
            ("rho", self.params.rho),
            ("alpha_l", self.params.alpha_l),
            ("alpha_u", self.params.alpha_u),
            ("eta", self.eta),
            ("eps_gd", self.eps_gd),
        ])
    }
}

pub fn run(cfg: &ExperimentConfig) -> LabResult<ExperimentOutput> {
    let ns: Vec<usize> = cfg
        .require_grid("n")?
        .into_iter()
        .map(|n| {
            if n >= 1.0 && n.fract() == 0.0 {
                Ok(n as usize)
            } else {
                Err(LabError::Config(format!("grid n must hold positive integers, got {n}")))
            }
        })
        .collect::<LabResult<_>>()?;
    let base_seed = cfg.seeds[0];
    let reps = cfg.gd.replicates;
    let amp_opts = cfg.amp_options();
    let lambda = cfg.gd.lambda;

    let mut cells = Vec::new();
    for rho in cfg.grid_or("rho", cfg.model.rho)? {
        for (al, au) in alpha_pairs(cfg)? {
            for eta in cfg.grid_or("eta", cfg.gd.eta)? {
                for eps_gd in cfg.grid_or("eps_gd", cfg.gd.eps_gd)? {
                    let params = with_alphas(&cfg.model, rho, al, au);
                    cells.push(Cell { params, eta, eps_gd });
                }
            }
        }
    }

    let mut out = ExperimentOutput::default();
    let key_cols = ["rho", "alpha_l", "alpha_u", "eta", "eps_gd"];
    let cols = |extra: &[&'static str]| -> Vec<&'static str> { key_cols.iter().chain(extra).copied().collect() };
    let mut rows = Table::new(
        "gd_vs_amp.csv",
        &cols(&[
            "lambda", "chi", "n_dim", "replicate", "seed", "delta", "amp_iter", "amp_converged", "gd_iter",
            "gd_converged", "k_amp", "v_amp", "k_gd", "v_gd",
        ]),
    );
    let mut fits = Table::new(
        "gd_fit.csv",
        &cols(&[
            "delta0", "a", "d", "residual", "degenerate", "d_at_bound", "boot_q25", "boot_median", "boot_q75",
            "boot_failures",
        ]),
    );
    let mut boots = Table::new("gd_bootstrap.csv", &cols(&["draw", "delta0"]));
    let mut traces = Table::new("gd_trace.csv", &cols(&["n_dim", "solver", "iter", "k", "v"]));
    let mut summary = Vec::new();

    for cell in &cells {
        let name = cell.name();
        let chi = match chi_for(&cell.params, lambda, cfg) {
            Ok(c) => c,
            Err(e) => {
                out.tasks.push(TaskStatus::failed(&name, e));
                continue;
            }
        };
        let gd_cfg = GdConfig {
            eta: cell.eta,
            eps_gd: cell.eps_gd,
            ..cfg.gd_config()
        };
        let jobs: Vec<(usize, usize)> = ns.iter().flat_map(|&n| (0..reps).map(move |r| (n, r))).collect();
        let results: Vec<_> = jobs
            .par_iter()
            .map(|&(n, r)| {
                let p = ModelParams { n_dim: n, ..cell.params };
                let keep = cfg.gd.trace && r == 0;
                replicate(&p, chi, base_seed + r as u64, &amp_opts, &gd_cfg, keep)
            })
            .collect();

        let mut samples: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut failures = 0;
        for (&(n, r), res) in jobs.iter().zip(results) {
            let (rep, trace) = match res {
                Ok(x) => x,
                Err(e) => {
                    failures += 1;
                    out.tasks.push(TaskStatus::failed(format!("{name}:n={n}:rep={r}"), e));
                    continue;
                }
            };
            samples.entry(n).or_default().push(rep.delta);
            let mut row = cell.key();
            row.extend([
                fmt(lambda),
                fmt(chi),
                n.to_string(),
                r.to_string(),
                rep.seed.to_string(),
                fmt(rep.delta),
                rep.amp_iter.to_string(),
                rep.amp_converged.to_string(),
                rep.gd_iter.to_string(),
                rep.gd_converged.to_string(),
                fmt(rep.amp.k),
                fmt(rep.amp.v),
                fmt(rep.gd.k),
                fmt(rep.gd.v),
            ]);
            rows.push(row);
            if let Some(t) = trace {
                for (solver, hist) in [("amp", &t.amp), ("gd", &t.gd)] {
                    for (i, op) in hist.iter().enumerate() {
                        let mut row = cell.key();
                        row.extend([n.to_string(), solver.into(), i.to_string(), fmt(op.k), fmt(op.v)]);
                        traces.push(row);
                    }
                }
            }
        }

        let mut cell_summary = json!({ "cell": name, "chi": chi, "failed_replicates": failures });
        if samples.len() >= 3 {
            let fit = fit_power_law(&samples);
            out.tasks.push(TaskStatus::from_result(format!("{name}:fit"), &fit));
            if let Ok(fit) = fit {
                let (mut q, mut boot_fail) = ([f64::NAN; 3], 0);
                if cfg.gd.n_boot >= 100 {
                    let b = bootstrap_delta0(&samples, cfg.gd.n_boot, cfg.gd.boot_seed);
                    out.tasks.push(TaskStatus::from_result(format!("{name}:bootstrap"), &b));
                    if let Ok(b) = b {
                        let mut sorted = b.draws.clone();
                        sorted.sort_by(f64::total_cmp);
                        q = [quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75)];
                        boot_fail = b.failures;
                        for (i, d) in b.draws.iter().enumerate() {
                            let mut row = cell.key();
                            row.extend([i.to_string(), fmt(*d)]);
                            boots.push(row);
                        }
                    }
                }
                let mut row = cell.key();
                row.extend([
                    fmt(fit.delta0),
                    fmt(fit.a),
                    fmt(fit.d),
                    fmt(fit.residual),
                    fit.degenerate.to_string(),
                    fit.d_at_bound.to_string(),
                    fmt(q[0]),
                    fmt(q[1]),
                    fmt(q[2]),
                    boot_fail.to_string(),
                ]);
                fits.push(row);
                cell_summary["delta0"] = json!(fit.delta0);
                cell_summary["a"] = json!(fit.a);
                cell_summary["d"] = json!(fit.d);
                cell_summary["boot_iqr"] = json!([q[0], q[2]]);
                cell_summary["n_values"] = json!(fit.n_values);
                cell_summary["means"] = json!(fit.means);
                cell_summary["std_errors"] = json!(fit.std_errors);
            }
        }
        out.tasks.push(TaskStatus::ok(&name));
        summary.push(cell_summary);
    }
    out.tables.extend([rows, fits]);
    if cfg.gd.n_boot >= 100 {
        out.tables.push(boots);
    }
    if cfg.gd.trace {
        out.tables.push(traces);
    }
    out.summary.insert("lambda".into(), json!(lambda));
    out.summary.insert("cells".into(), summary.into());
    Ok(out)
}
