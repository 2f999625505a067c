//! Correspondence between the regularization strength `λ` and the fixed
//! susceptibility `χ` at which AMP and state evolution are run.
//!
//! For each `χ` the state-evolution fixed point determines `λ(χ)` through
//! [`lambda_from_chi`]. Inverting that map gives the `χ` to use for a
//! requested `λ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::quadrature::GaussHermite;
use crate::roots::{bisect, illinois};
use crate::state_evolution::{lambda_from_chi, se_fixed_point, OrderParams, SeOptions};

/// Below this `|k|` (and `v`) a fixed point counts as trivial.
pub const ZERO_TOL: f64 = 1e-7;

/// Which state-evolution start selects the fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Start from `(k, v) = (1, 0)`.
    Informed,
    /// Start from `(k, v) = (1e-6, 1e-6)`.
    Uninformed,
}

impl Branch {
    pub fn init(self, chi: f64, lambda0: f64) -> OrderParams {
        match self {
            Branch::Informed => OrderParams::informed(chi, lambda0),
            Branch::Uninformed => OrderParams::uninformed(chi, lambda0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Informed => "informed",
            Branch::Uninformed => "uninformed",
        }
    }
}

impl std::str::FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "informed" => Ok(Branch::Informed),
            "uninformed" => Ok(Branch::Uninformed),
            other => Err(Error::InvalidParams(format!("unknown branch '{other}'"))),
        }
    }
}

/// Coarse label of a fixed point, by which order parameters vanish.
pub fn fixed_point_tag(op: &OrderParams) -> &'static str {
    if op.k.abs() > ZERO_TOL {
        "detected"
    } else if op.v > ZERO_TOL {
        "random"
    } else {
        "undetected"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaChiRow {
    pub chi: f64,
    pub lambda: f64,
    pub k_star: f64,
    pub v_star: f64,
    pub phase: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaChiTable {
    pub rows: Vec<LambdaChiRow>,
    /// `λ` strictly decreases along the rows.
    pub monotone: bool,
    /// `χ` where the fixed-point tag changes, located by bisection.
    pub cusp_chi: Option<f64>,
    /// Grid points skipped because the fixed point was unavailable.
    pub skipped: usize,
}

fn row_at(params: &ModelParams, chi: f64, branch: Branch, opts: &SeOptions, rule: &GaussHermite) -> Result<Option<LambdaChiRow>> {
    let fp = se_fixed_point(params, chi, branch.init(chi, params.lambda0), opts, rule)?;
    if !fp.converged {
        return Ok(None);
    }
    let lambda = match lambda_from_chi(params, chi, &fp.op, rule) {
        Ok(l) => l,
        Err(Error::Singular { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(Some(LambdaChiRow {
        chi,
        lambda,
        k_star: fp.op.k,
        v_star: fp.op.v,
        phase: fixed_point_tag(&fp.op).to_string(),
    }))
}

impl LambdaChiTable {
    /// Tabulates `λ(χ)` on `chis` (sorted internally). Rows whose fixed point
    /// does not converge or whose `T` is singular are skipped and counted.
    pub fn build(params: &ModelParams, chis: &[f64], branch: Branch, opts: &SeOptions, rule: &GaussHermite) -> Result<Self> {
        params.validate()?;
        let mut sorted: Vec<f64> = chis.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        sorted.dedup();
        let mut rows = Vec::with_capacity(sorted.len());
        let mut skipped = 0;
        for &chi in &sorted {
            match row_at(params, chi, branch, opts, rule)? {
                Some(row) => rows.push(row),
                None => skipped += 1,
            }
        }
        let monotone = rows.windows(2).all(|w| w[1].lambda < w[0].lambda);
        let mut cusp_chi = None;
        if let Some(i) = rows.windows(2).position(|w| w[0].phase != w[1].phase) {
            let (lo, hi) = (rows[i].chi, rows[i + 1].chi);
            let first = rows[i].phase.clone();
            let located = bisect(
                |chi| {
                    Ok(match row_at(params, chi, branch, opts, rule)? {
                        Some(r) if r.phase == first => -1.0,
                        _ => 1.0,
                    })
                },
                lo,
                hi,
                1e-8 * hi,
            )?;
            cusp_chi = Some(located);
        }
        Ok(LambdaChiTable {
            rows,
            monotone,
            cusp_chi,
            skipped,
        })
    }

    /// CSV with header `chi,lambda,k_star,v_star,phase`.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        match self.cusp_chi {
            Some(c) => writeln!(out, "# cusp_chi={c} skipped={}", self.skipped)?,
            None => writeln!(out, "# cusp_chi=none skipped={}", self.skipped)?,
        }
        writeln!(out, "chi,lambda,k_star,v_star,phase")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.chi, r.lambda, r.k_star, r.v_star, r.phase)?;
        }
        Ok(())
    }

    /// Parses the output of [`write_csv`](Self::write_csv); `#` lines are
    /// ignored.
    pub fn read_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let bad = |line: &str| Error::InvalidParams(format!("malformed table line '{line}'"));
        let mut cusp_chi = None;
        let mut skipped = 0;
        for line in text.lines().filter_map(|l| l.strip_prefix("# cusp_chi=")) {
            let (c, s) = line.split_once(" skipped=").ok_or_else(|| bad(line))?;
            cusp_chi = if c == "none" { None } else { Some(c.parse::<f64>().map_err(|_| bad(line))?) };
            skipped = s.parse::<usize>().map_err(|_| bad(line))?;
        }
        for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            rows.push(LambdaChiRow {
                chi: num(cols[0])?,
                lambda: num(cols[1])?,
                k_star: num(cols[2])?,
                v_star: num(cols[3])?,
                phase: cols[4].to_string(),
            });
        }
        let monotone = rows.windows(2).all(|w| w[1].lambda < w[0].lambda);
        Ok(LambdaChiTable {
            rows,
            monotone,
            cusp_chi,
            skipped,
        })
    }
}

/// `count` log-spaced values in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

/// `λ(χ)` on the requested branch, or `None` when unavailable.
pub fn lambda_at(params: &ModelParams, chi: f64, branch: Branch, opts: &SeOptions, rule: &GaussHermite) -> Result<Option<(f64, OrderParams)>> {
    let fp = se_fixed_point(params, chi, branch.init(chi, params.lambda0), opts, rule)?;
    if !fp.converged {
        return Ok(None);
    }
    match lambda_from_chi(params, chi, &fp.op, rule) {
        Ok(l) => Ok(Some((l, fp.op))),
        Err(Error::Singular { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `λ(χ)` from wherever state evolution stopped. Inside a bracket whose ends
/// converged, non-convergence comes from critical slowing down next to a
/// phase boundary, where both branches meet and the iterate sits close to
/// the fixed point.
fn lambda_at_last_iterate(params: &ModelParams, chi: f64, branch: Branch, opts: &SeOptions, rule: &GaussHermite) -> Result<f64> {
    let fp = se_fixed_point(params, chi, branch.init(chi, params.lambda0), opts, rule)?;
    log::debug!("lambda(chi) at chi={chi} from an unconverged iterate, residual {}", fp.residual);
    lambda_from_chi(params, chi, &fp.op, rule)
}

/// Smallest `χ` in `(1e-6 σ², 10 σ²)` with `λ(χ) = lambda` on `branch`,
/// refined until `|λ(χ) - lambda| < 1e-8`.
pub fn chi_from_lambda(params: &ModelParams, lambda: f64, branch: Branch, opts: &SeOptions, rule: &GaussHermite) -> Result<f64> {
    params.validate()?;
    if !(lambda > 0.0) {
        return Err(Error::InvalidParams(format!("lambda must be positive, got {lambda}")));
    }
    let s2 = params.sigma2;
    if params.alpha_u == 0.0 {
        // λ(χ) = 1/χ - α_l/σ² exactly.
        return Ok(1.0 / (lambda + params.alpha_l / s2));
    }
    // λ → ∞ as χ → 0, so start the scan well above the target.
    let grid = log_grid(1e-6 * s2, 10.0 * s2, 81);
    let mut prev: Option<(f64, f64)> = None;
    for &chi in &grid {
        let Some((l, _)) = lambda_at(params, chi, branch, opts, rule)? else {
            prev = None;
            continue;
        };
        if let Some((c0, l0)) = prev {
            if (l0 - lambda) * (l - lambda) <= 0.0 {
                return illinois(
                    |c| match lambda_at(params, c, branch, opts, rule)? {
                        Some((lc, _)) => Ok(lc - lambda),
                        None => lambda_at_last_iterate(params, c, branch, opts, rule).map(|lc| lc - lambda),
                    },
                    c0,
                    chi,
                    1e-15,
                    1e-9,
                    200,
                );
            }
        }
        prev = Some((chi, l));
    }
    Err(Error::OutOfRange(format!(
        "no chi in (1e-6 sigma2, 10 sigma2) reproduces lambda={lambda} on the {} branch",
        branch.as_str()
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Estimator;

    fn tight() -> SeOptions {
        SeOptions {
            eps: 1e-13,
            ..Default::default()
        }
    }

    #[test]
    fn trivial_problem_inverts_exactly() {
        let p = ModelParams {
            alpha_u: 0.0,
            ..Default::default()
        };
        let rule = GaussHermite::new(21);
        assert_eq!(chi_from_lambda(&p, 2.0, Branch::Informed, &tight(), &rule).unwrap(), 0.5);
    }

    #[test]
    fn undetected_branch_matches_quadratic_root() {
        let p = ModelParams {
            alpha_u: 1.0,
            ..Default::default()
        };
        let rule = GaussHermite::default();
        for lambda in [3.5, 5.0, 10.0] {
            let chi = chi_from_lambda(&p, lambda, Branch::Uninformed, &tight(), &rule).unwrap();
            // 1/χ - α_u + α_u/(1-χ) = λ with σ² = 1; take the root below σ².
            let (a, b) = (lambda + p.alpha_u, 1.0 + lambda);
            let root = 0.5 * (b - (b * b - 4.0 * a).sqrt()) / a;
            assert!((chi - root).abs() < 1e-9, "{chi} vs {root}");
        }
    }

    #[test]
    fn round_trip_at_fixed_chi() {
        let p = ModelParams {
            alpha_l: 0.5,
            alpha_u: 2.5,
            ..Default::default()
        };
        let rule = GaussHermite::default();
        for est in [Estimator::Rmle, Estimator::Bayes] {
            let p = p.with_estimator(est);
            let (lam, _) = lambda_at(&p, 0.3, Branch::Informed, &tight(), &rule).unwrap().unwrap();
            let chi = chi_from_lambda(&p, lam, Branch::Informed, &tight(), &rule).unwrap();
            assert!((chi - 0.3).abs() < 1e-7, "{est:?}: {chi}");
        }
    }

    #[test]
    fn cusp_marks_phase_change() {
        let p = ModelParams {
            alpha_u: 2.0,
            ..Default::default()
        };
        let rule = GaussHermite::new(101);
        let chis: Vec<f64> = (1..=18).map(|i| 0.05 * i as f64).collect();
        let table = LambdaChiTable::build(&p, &chis, Branch::Uninformed, &tight(), &rule).unwrap();
        // Uninformed start leaves the trivial point once k_lin = 2χ/(1-χ) > 1.
        let cusp = table.cusp_chi.expect("tag change");
        assert!((cusp - 1.0 / 3.0).abs() < 1e-3, "cusp at {cusp}");
        assert!(table.rows.windows(2).all(|w| w[0].chi < w[1].chi));
        let mut csv = Vec::new();
        table.write_csv(&mut csv).unwrap();
        let back = LambdaChiTable::read_csv(std::str::from_utf8(&csv).unwrap()).unwrap();
        assert_eq!(back, table);
    }
}
