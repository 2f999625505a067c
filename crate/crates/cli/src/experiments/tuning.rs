//! Optimal regularization of RMLE against the Bayes-optimal reference: the
//! error-vs-`λ` curve with its minimizer, and the minimal gap across SNR.

use rayon::prelude::*;
use serde_json::json;
use ssl_gmm_core::tuning::{gap_curves, GapRow};
use ssl_gmm_core::{search_optimal_lambda, Metric, ModelParams, OptimalLambda};

use super::{alpha_pairs, cell_name, with_alphas};
use crate::config::ExperimentConfig;
use crate::error::LabResult;
use crate::output::{fmt, fmt_opt, ExperimentOutput, Table, TaskStatus};

fn series(cfg: &ExperimentConfig) -> LabResult<Vec<ModelParams>> {
    let mut out = Vec::new();
    for rho in cfg.grid_or("rho", cfg.model.rho)? {
        for (al, au) in alpha_pairs(cfg)? {
            out.push(with_alphas(&cfg.model, rho, al, au));
        }
    }
    Ok(out)
}

fn series_name(metric: Metric, p: &ModelParams) -> String {
    format!(
        "{}:{}",
        metric.as_str(),
        cell_name(&[("rho", p.rho), ("alpha_l", p.alpha_l), ("alpha_u", p.alpha_u), ("sigma2", p.sigma2)])
    )
}

fn key(metric: Metric, p: &ModelParams) -> Vec<String> {
    vec![
        metric.as_str().into(),
        fmt(p.rho),
        fmt(p.alpha_l),
        fmt(p.alpha_u),
        fmt(p.sigma2),
    ]
}

pub fn run_optimal(cfg: &ExperimentConfig) -> LabResult<ExperimentOutput> {
    let rule = cfg.rule();
    let opts = cfg.tuning_options();
    let mut jobs = Vec::new();
    for base in series(cfg)? {
        for s2 in cfg.grid_or("sigma2", cfg.model.sigma2)? {
            for metric in cfg.metric_list() {
                jobs.push((metric, ModelParams { sigma2: s2, ..base }));
            }
        }
    }
    let results: Vec<_> = jobs
        .par_iter()
        .map(|(m, p)| search_optimal_lambda(p, *m, &opts, &rule))
        .collect();

    let key_cols = ["metric", "rho", "alpha_l", "alpha_u", "sigma2"];
    let cols = |extra: &[&'static str]| -> Vec<&'static str> { key_cols.iter().chain(extra).copied().collect() };
    let mut best = Table::new(
        "optimal_lambda.csv",
        &cols(&[
            "snr", "lambda_star", "inv_lambda_star", "chi_star", "rmle_error", "bo_error", "rel_gap", "flat",
            "non_unimodal", "monotone",
        ]),
    );
    let mut curves = Table::new(
        "optimal_lambda_curve.csv",
        &cols(&["chi", "lambda", "inv_lambda", "k", "v", "mse", "ge"]),
    );
    let mut out = ExperimentOutput::default();
    let mut summary = Vec::new();
    for ((metric, p), res) in jobs.iter().zip(results) {
        let name = series_name(*metric, p);
        out.tasks.push(TaskStatus::from_result(&name, &res));
        let Ok(opt) = res else { continue };
        let OptimalLambda {
            lambda_star,
            chi_star,
            error_at_star,
            bo_error,
            flat,
            non_unimodal,
            monotone,
            ..
        } = opt;
        let mut row = key(*metric, p);
        row.extend([
            fmt(p.snr()),
            fmt_opt(lambda_star),
            fmt_opt(opt.inv_lambda_star()),
            fmt(chi_star),
            fmt(error_at_star),
            fmt(bo_error),
            fmt(opt.relative_gap()),
            flat.to_string(),
            non_unimodal.to_string(),
            monotone.to_string(),
        ]);
        best.push(row);
        for pt in &opt.curve {
            let mut row = key(*metric, p);
            row.extend([
                fmt(pt.chi),
                fmt(pt.lambda),
                fmt(1.0 / pt.lambda),
                fmt(pt.k),
                fmt(pt.v),
                fmt(pt.mse),
                fmt(pt.ge),
            ]);
            curves.push(row);
        }
        summary.push(json!({
            "series": name,
            "inv_lambda_star": opt.inv_lambda_star(),
            "rel_gap": opt.relative_gap(),
            "flat": flat,
        }));
    }
    out.tables.extend([best, curves]);
    out.summary.insert("optima".into(), summary.into());
    Ok(out)
}

pub fn run_gap_curves(cfg: &ExperimentConfig) -> LabResult<ExperimentOutput> {
    let rule = cfg.rule();
    let opts = cfg.tuning_options();
    let snrs = cfg.require_grid("snr")?;
    let mut jobs = Vec::new();
    for base in series(cfg)? {
        for metric in cfg.metric_list() {
            for &snr in &snrs {
                jobs.push((metric, base, snr));
            }
        }
    }
    let results: Vec<LabResult<GapRow>> = jobs
        .par_iter()
        .map(|(m, p, snr)| Ok(gap_curves(p, &[*snr], *m, &opts, &rule)?[0]))
        .collect();

    let mut table = Table::new(
        "gap_curves.csv",
        &["metric", "rho", "alpha_l", "alpha_u", "snr", "inv_lambda_star", "rmle_error", "bo_error", "rel_gap", "flat"],
    );
    let mut out = ExperimentOutput::default();
    // (series, metric) -> (max gap, snr at max, failures)
    let mut maxima: Vec<(String, f64, f64, usize)> = Vec::new();
    for ((metric, p, snr), res) in jobs.iter().zip(results) {
        let name = format!(
            "{}:{}",
            metric.as_str(),
            cell_name(&[("rho", p.rho), ("alpha_l", p.alpha_l), ("alpha_u", p.alpha_u)])
        );
        if maxima.last().map(|m| &m.0) != Some(&name) {
            maxima.push((name.clone(), f64::NEG_INFINITY, f64::NAN, 0));
        }
        let entry = maxima.last_mut().expect("pushed above");
        let row = match res {
            Ok(r) => r,
            Err(e) => {
                entry.3 += 1;
                out.tasks.push(TaskStatus::failed(format!("{name}:snr={snr}"), e));
                continue;
            }
        };
        if row.rel_gap > entry.1 {
            entry.1 = row.rel_gap;
            entry.2 = row.snr;
        }
        table.push(vec![
            metric.as_str().into(),
            fmt(p.rho),
            fmt(p.alpha_l),
            fmt(p.alpha_u),
            fmt(row.snr),
            fmt_opt(row.inv_lambda_star),
            fmt(row.rmle_error),
            fmt(row.bo_error),
            fmt(row.rel_gap),
            row.flat.to_string(),
        ]);
    }
    let summary: Vec<_> = maxima
        .iter()
        .map(|(name, gap, snr, failed)| {
            out.tasks.push(TaskStatus::ok(name));
            json!({ "series": name, "max_rel_gap": gap, "snr_at_max": snr, "failed_points": failed })
        })
        .collect();
    out.tables.push(table);
    out.summary.insert("series".into(), summary.into());
    Ok(out)
}
