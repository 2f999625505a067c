//! Phase labels over a `(α_u, χ)` or `(α_u, λ)` grid, plus the closed-form
//! and numerically located boundaries for each `α_u`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde_json::json;
use ssl_gmm_core::phase::{
    critical_chi_u_d, critical_chi_u_r, detected_random_boundary, nishimori_line, PhaseReport,
};
use ssl_gmm_core::{
    chi_from_lambda, classify_phase, lambda_from_chi, mse_from_order_params, Branch, Estimator, GaussHermite,
    ModelParams, OrderParams, SeOptions,
};

use crate::config::ExperimentConfig;
use crate::error::LabResult;
use crate::output::{fmt, fmt_opt, ExperimentOutput, Table, TaskStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Axis {
    Chi(f64),
    Lambda(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub params: ModelParams,
    pub lambda: f64,
    pub report: PhaseReport,
}

/// Classifies the point at `λ` by first locating its `χ` on the informed
/// branch, then on the uninformed one.
pub fn classify_at_lambda(params: &ModelParams, lambda: f64, opts: &SeOptions, rule: &GaussHermite) -> LabResult<Point> {
    let p = params.with_lambda(lambda);
    let chi = chi_from_lambda(&p, lambda, Branch::Informed, opts, rule)
        .or_else(|_| chi_from_lambda(&p, lambda, Branch::Uninformed, opts, rule))?;
    let report = classify_phase(&p, chi, opts, rule)?;
    Ok(Point { params: p, lambda, report })
}

pub fn classify_at_chi(params: &ModelParams, chi: f64, opts: &SeOptions, rule: &GaussHermite) -> LabResult<Point> {
    let report = classify_phase(params, chi, opts, rule)?;
    let lambda = if report.converged {
        let op = OrderParams::new(chi, report.k_star, report.v_star, params.lambda0);
        lambda_from_chi(params, chi, &op, rule).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    Ok(Point { params: *params, lambda, report })
}

fn slices(cfg: &ExperimentConfig) -> LabResult<Vec<ModelParams>> {
    let mut out = Vec::new();
    for est in cfg.estimator_list() {
        for rho in cfg.grid_or("rho", cfg.model.rho)? {
            for al in cfg.grid_or("alpha_l", cfg.model.alpha_l)? {
                for s2 in cfg.grid_or("sigma2", cfg.model.sigma2)? {
                    out.push(
                        ModelParams {
                            rho,
                            alpha_l: al,
                            sigma2: s2,
                            ..cfg.model
                        }
                        .with_estimator(est),
                    );
                }
            }
        }
    }
    Ok(out)
}

pub fn run(cfg: &ExperimentConfig) -> LabResult<ExperimentOutput> {
    let rule = cfg.rule();
    let opts = cfg.se_options();
    let alpha_us = cfg.require_grid("alpha_u")?;
    let axis: Vec<Axis> = match cfg.grid("lambda")? {
        Some(ls) => ls.into_iter().map(Axis::Lambda).collect(),
        None => cfg.require_grid("chi")?.into_iter().map(Axis::Chi).collect(),
    };
    let slices = slices(cfg)?;

    let mut jobs = Vec::new();
    for (si, s) in slices.iter().enumerate() {
        for &au in &alpha_us {
            for &a in &axis {
                jobs.push((si, s.with_alpha_u(au), a));
            }
        }
    }
    let results: Vec<LabResult<Point>> = jobs
        .par_iter()
        .map(|(_, p, a)| match *a {
            Axis::Chi(chi) => classify_at_chi(p, chi, &opts, &rule),
            Axis::Lambda(l) => classify_at_lambda(p, l, &opts, &rule),
        })
        .collect();

    let mut out = ExperimentOutput::default();
    let mut table = Table::new(
        "phase_diagram.csv",
        &[
            "estimator", "rho", "alpha_l", "sigma2", "alpha_u", "lambda", "chi", "phase", "rsb_kind", "k_star", "v_star", "mse",
            "at_integral", "k_lin", "v_lin", "converged",
        ],
    );
    let mut counts: Vec<BTreeMap<&'static str, usize>> = vec![BTreeMap::new(); slices.len()];
    for ((si, p, a), res) in jobs.iter().zip(results) {
        let coord = match a {
            Axis::Chi(c) => format!("chi={c}"),
            Axis::Lambda(l) => format!("lambda={l}"),
        };
        let name = format!(
            "{}:rho={},alpha_l={},sigma2={},alpha_u={},{coord}",
            p.estimator.as_str(),
            p.rho,
            p.alpha_l,
            p.sigma2,
            p.alpha_u
        );
        match res {
            Ok(pt) => {
                let r = &pt.report;
                *counts[*si].entry(r.phase.as_str()).or_default() += 1;
                table.push(vec![
                    p.estimator.as_str().into(),
                    fmt(p.rho),
                    fmt(p.alpha_l),
                    fmt(p.sigma2),
                    fmt(p.alpha_u),
                    fmt(pt.lambda),
                    fmt(r.chi),
                    r.phase.as_str().into(),
                    r.rsb_kind.map(|k| k.as_str()).unwrap_or("").into(),
                    fmt(r.k_star),
                    fmt(r.v_star),
                    fmt(mse_from_order_params(r.k_star, r.v_star, p.lambda0)),
                    fmt(r.at_integral),
                    fmt(r.k_lin),
                    fmt(r.v_lin),
                    r.converged.to_string(),
                ]);
            }
            Err(e) => {
                *counts[*si].entry("failed").or_default() += 1;
                out.tasks.push(TaskStatus::failed(name, e));
            }
        }
    }
    if out.tasks.is_empty() {
        out.tasks.push(TaskStatus::ok(format!("{} points", jobs.len())));
    }

    let mut bounds = Table::new(
        "phase_boundaries.csv",
        &["estimator", "rho", "alpha_l", "sigma2", "alpha_u", "chi_ur", "chi_ud", "chi_dr", "chi_nishimori"],
    );
    let bound_rows: Vec<Vec<String>> = slices
        .iter()
        .flat_map(|s| alpha_us.iter().map(move |&au| s.with_alpha_u(au)))
        .collect::<Vec<_>>()
        .par_iter()
        .map(|p| boundary_row(p, &opts, &rule))
        .collect();
    for r in bound_rows {
        bounds.push(r);
    }
    out.tables.extend([table, bounds]);

    let summary: Vec<_> = slices
        .iter()
        .zip(&counts)
        .map(|(s, c)| {
            json!({
                "estimator": s.estimator.as_str(),
                "rho": s.rho,
                "alpha_l": s.alpha_l,
                "sigma2": s.sigma2,
                "counts": c,
            })
        })
        .collect();
    out.summary.insert("slices".into(), summary.into());
    Ok(out)
}

fn boundary_row(p: &ModelParams, opts: &SeOptions, rule: &GaussHermite) -> Vec<String> {
    let symmetric = p.rho == 0.5 && p.alpha_l == 0.0 && p.alpha_u > 0.0;
    let ok = |r: ssl_gmm_core::Result<f64>| r.ok();
    let (ur, ud, dr) = if symmetric {
        (
            ok(critical_chi_u_r(p, p.estimator)),
            ok(critical_chi_u_d(p, p.estimator)),
            ok(detected_random_boundary(p, p.estimator, rule)),
        )
    } else {
        (None, None, None)
    };
    let nishimori = if p.estimator == Estimator::Bayes && p.alpha_u > 0.0 {
        nishimori_line(p, &[p.alpha_u], opts, rule).ok().map(|v| v[0].1)
    } else {
        None
    };
    vec![
        p.estimator.as_str().into(),
        fmt(p.rho),
        fmt(p.alpha_l),
        fmt(p.sigma2),
        fmt(p.alpha_u),
        fmt_opt(ur),
        fmt_opt(ud),
        fmt_opt(dr),
        fmt_opt(nishimori),
    ]
}
