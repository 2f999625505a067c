//! Fixed-point MSE over an `(SNR, α_u)` grid at fixed `λ`, realized with
//! `σ² = 1/(λ0 SNR)`, plus the undetected/detected boundary per `SNR`.

use rayon::prelude::*;
use serde_json::json;
use ssl_gmm_core::lambda_chi::fixed_point_tag;
use ssl_gmm_core::phase::{at_instability_with, bo_heatmap_boundary};
use ssl_gmm_core::{
    chi_from_lambda, ge_from_order_params, mse_from_order_params, se_fixed_point, Branch, GaussHermite, ModelParams,
    OrderParams, SeOptions,
};

use crate::config::ExperimentConfig;
use crate::error::LabResult;
use crate::output::{fmt, fmt_opt, ExperimentOutput, Table, TaskStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatPoint {
    pub chi: f64,
    pub op: OrderParams,
    pub converged: bool,
    pub mse: f64,
    pub ge: f64,
    pub at_integral: f64,
}

/// Fixed point reached from the informed start at the `χ` matching
/// `params.lambda`.
pub fn heat_point(params: &ModelParams, opts: &SeOptions, rule: &GaussHermite) -> LabResult<HeatPoint> {
    let lambda = params.lambda;
    let chi = chi_from_lambda(params, lambda, Branch::Informed, opts, rule)
        .or_else(|_| chi_from_lambda(params, lambda, Branch::Uninformed, opts, rule))?;
    let fp = se_fixed_point(params, chi, OrderParams::informed(chi, params.lambda0), opts, rule)?;
    let op = fp.op;
    Ok(HeatPoint {
        chi,
        op,
        converged: fp.converged,
        mse: mse_from_order_params(op.k, op.v, params.lambda0),
        ge: ge_from_order_params(op.k, op.v, params).unwrap_or(f64::NAN),
        at_integral: at_instability_with(params, chi, &op, params.estimator, rule),
    })
}

pub fn run(cfg: &ExperimentConfig) -> LabResult<ExperimentOutput> {
    let rule = cfg.rule();
    let opts = cfg.se_options();
    let alpha_us = cfg.require_grid("alpha_u")?;
    let snrs = cfg.require_grid("snr")?;
    let lambdas = cfg.grid_or("lambda", cfg.model.lambda)?;
    let l0 = cfg.model.lambda0;

    let mut panels = Vec::new();
    for est in cfg.estimator_list() {
        for &lambda in &lambdas {
            panels.push(cfg.model.with_estimator(est).with_lambda(lambda));
        }
    }
    let mut jobs = Vec::new();
    for p in &panels {
        for &snr in &snrs {
            for &au in &alpha_us {
                jobs.push(ModelParams {
                    sigma2: 1.0 / (l0 * snr),
                    alpha_u: au,
                    ..*p
                });
            }
        }
    }
    let results: Vec<_> = jobs.par_iter().map(|p| heat_point(p, &opts, &rule)).collect();

    let mut out = ExperimentOutput::default();
    let mut table = Table::new(
        "mse_heatmap.csv",
        &[
            "estimator", "lambda", "snr", "alpha_u", "sigma2", "chi", "k_star", "v_star", "mse", "ge", "fixed_point",
            "at_integral", "converged",
        ],
    );
    let mut failures = 0;
    for (p, res) in jobs.iter().zip(results) {
        match res {
            Ok(h) => table.push(vec![
                p.estimator.as_str().into(),
                fmt(p.lambda),
                fmt(p.snr()),
                fmt(p.alpha_u),
                fmt(p.sigma2),
                fmt(h.chi),
                fmt(h.op.k),
                fmt(h.op.v),
                fmt(h.mse),
                fmt(h.ge),
                fixed_point_tag(&h.op).into(),
                fmt(h.at_integral),
                h.converged.to_string(),
            ]),
            Err(e) => {
                failures += 1;
                let name = format!(
                    "{}:lambda={},snr={},alpha_u={}",
                    p.estimator.as_str(),
                    p.lambda,
                    p.snr(),
                    p.alpha_u
                );
                out.tasks.push(TaskStatus::failed(name, e));
            }
        }
    }
    if failures == 0 {
        out.tasks.push(TaskStatus::ok(format!("{} points", jobs.len())));
    }

    let mut bounds = Table::new("heatmap_boundary.csv", &["estimator", "lambda", "snr", "alpha_u_boundary"]);
    for p in &panels {
        for &snr in &snrs {
            let q = ModelParams {
                sigma2: 1.0 / (l0 * snr),
                ..*p
            };
            bounds.push(vec![
                p.estimator.as_str().into(),
                fmt(p.lambda),
                fmt(snr),
                fmt_opt(bo_heatmap_boundary(&q).ok()),
            ]);
        }
    }
    out.tables.extend([table, bounds]);
    out.summary.insert("points".into(), json!(jobs.len()));
    out.summary.insert("failed_points".into(), json!(failures));
    Ok(out)
}
