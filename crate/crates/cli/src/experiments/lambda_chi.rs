//! `λ(χ)` curves on both state-evolution branches, with an optional on-disk
//! cache keyed by everything the table depends on.

use std::path::PathBuf;

use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};
use ssl_gmm_core::lambda_chi::LambdaChiTable;
use ssl_gmm_core::{Branch, GaussHermite, ModelParams, SeOptions};

use crate::config::ExperimentConfig;
use crate::error::LabResult;
use crate::output::{fmt, fmt_opt, ExperimentOutput, Table, TaskStatus};

pub const CACHE_ENV: &str = "SSL_GMM_LAB_CACHE";

fn cache_path(params: &ModelParams, chis: &[f64], branch: Branch, opts: &SeOptions, nodes: usize) -> Option<PathBuf> {
    let dir = std::env::var_os(CACHE_ENV)?;
    let key = json!({
        "params": params,
        "chis": chis,
        "branch": branch.as_str(),
        "eps": opts.eps,
        "max_iter": opts.max_iter,
        "damping": opts.damping,
        "nodes": nodes,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let digest = hex::encode(Sha256::digest(key.to_string().as_bytes()));
    Some(PathBuf::from(dir).join(format!("lambda-chi-{}.csv", &digest[..32])))
}

/// Builds the table, reading and filling the cache when `SSL_GMM_LAB_CACHE`
/// is set. Cache failures fall back to recomputation.
pub fn cached_table(
    params: &ModelParams,
    chis: &[f64],
    branch: Branch,
    opts: &SeOptions,
    rule: &GaussHermite,
) -> LabResult<LambdaChiTable> {
    let path = cache_path(params, chis, branch, opts, rule.order());
    if let Some(p) = &path {
        if let Ok(text) = std::fs::read_to_string(p) {
            match LambdaChiTable::read_csv(&text) {
                Ok(t) => return Ok(t),
                Err(e) => log::warn!("ignoring unreadable cache entry {}: {e}", p.display()),
            }
        }
    }
    let table = LambdaChiTable::build(params, chis, branch, opts, rule)?;
    if let Some(p) = &path {
        let mut buf = Vec::new();
        let written = table
            .write_csv(&mut buf)
            .and_then(|_| std::fs::create_dir_all(p.parent().expect("joined path has a parent")))
            .and_then(|_| std::fs::write(p, &buf));
        if let Err(e) = written {
            log::warn!("could not write cache entry {}: {e}", p.display());
        }
    }
    Ok(table)
}

pub fn run(cfg: &ExperimentConfig) -> LabResult<ExperimentOutput> {
    let rule = cfg.rule();
    let opts = cfg.se_options();
    let chis = cfg.require_grid("chi")?;
    let mut curves = Vec::new();
    for est in cfg.estimator_list() {
        for rho in cfg.grid_or("rho", cfg.model.rho)? {
            for al in cfg.grid_or("alpha_l", cfg.model.alpha_l)? {
                for au in cfg.grid_or("alpha_u", cfg.model.alpha_u)? {
                    for branch in [Branch::Informed, Branch::Uninformed] {
                        let params = ModelParams {
                            rho,
                            alpha_l: al,
                            alpha_u: au,
                            ..cfg.model
                        }
                        .with_estimator(est);
                        curves.push((params, branch));
                    }
                }
            }
        }
    }
    let results: Vec<_> = curves
        .par_iter()
        .map(|(p, b)| cached_table(p, &chis, *b, &opts, &rule))
        .collect();

    let mut out = ExperimentOutput::default();
    let mut table = Table::new(
        "lambda_chi.csv",
        &["estimator", "rho", "alpha_l", "alpha_u", "branch", "chi", "lambda", "inv_lambda", "k", "v", "fixed_point"],
    );
    let mut summary = Vec::new();
    for ((p, branch), res) in curves.iter().zip(results) {
        let name = format!(
            "{}:rho={},alpha_l={},alpha_u={}:{}",
            p.estimator.as_str(),
            p.rho,
            p.alpha_l,
            p.alpha_u,
            branch.as_str()
        );
        out.tasks.push(TaskStatus::from_result(&name, &res));
        let Ok(t) = res else { continue };
        for r in &t.rows {
            table.push(vec![
                p.estimator.as_str().into(),
                fmt(p.rho),
                fmt(p.alpha_l),
                fmt(p.alpha_u),
                branch.as_str().into(),
                fmt(r.chi),
                fmt(r.lambda),
                fmt(1.0 / r.lambda),
                fmt(r.k_star),
                fmt(r.v_star),
                r.phase.clone(),
            ]);
        }
        summary.push(json!({
            "curve": name,
            "monotone": t.monotone,
            "cusp_chi": fmt_opt(t.cusp_chi),
            "skipped": t.skipped,
        }));
    }
    out.tables.push(table);
    out.summary.insert("curves".into(), summary.into());
    Ok(out)
}
