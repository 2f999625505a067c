//! Phase boundaries and classification of state-evolution fixed points.
//!
//! Three kinds of fixed point appear: undetected (`k = v = 0`), detected
//! (`k > 0`) and random (`k = 0`, `v > 0`). Wherever the replica-symmetric
//! fixed point is locally unstable (AT integral at least 1) the point is
//! reported as RSB; random and mixed points are merged into that label and
//! kept apart only in [`PhaseReport::rsb_kind`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambda_chi::{chi_from_lambda, Branch, ZERO_TOL};
use crate::params::{Estimator, ModelParams};
use crate::potentials::kernel_pair;
use crate::quadrature::GaussHermite;
use crate::roots::bisect;
use crate::state_evolution::{linearization, se_fixed_point, t2_average, t_average, OrderParams, SeOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Undetected,
    Detected,
    Rsb,
    /// State evolution did not settle.
    Indeterminate,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Undetected => "undetected",
            Phase::Detected => "detected",
            Phase::Rsb => "rsb",
            Phase::Indeterminate => "indeterminate",
        }
    }
}

/// Which unstable fixed point an RSB label came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RsbKind {
    /// `k = 0`, `v > 0`.
    Random,
    /// `k > 0` but AT-unstable.
    Mixed,
}

impl RsbKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RsbKind::Random => "random",
            RsbKind::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub chi: f64,
    pub params: ModelParams,
    pub phase: Phase,
    pub rsb_kind: Option<RsbKind>,
    pub k_star: f64,
    pub v_star: f64,
    /// Growth factor of `k` at the trivial point.
    pub k_lin: f64,
    /// Growth factor of `v` at the trivial point.
    pub v_lin: f64,
    /// AT integral at the reported fixed point.
    pub at_integral: f64,
    /// `k_lin - 1`, `v_lin - 1` and `at_integral - 1`.
    pub margins: [f64; 3],
    pub converged: bool,
}

fn require_unlabeled(params: &ModelParams) -> Result<()> {
    if params.alpha_u > 0.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange("no phase boundary without unlabeled data".into()))
    }
}

/// Susceptibility of the undetected solution at the configured `λ`.
///
/// RMLE (`ρ = ½`, no labels): the root of
/// `(α_u/σ² + λ) χ² - (1 + λσ²) χ + σ² = 0` that reduces to `1/λ` at
/// `α_u = 0`, namely the `+` root for `λσ² <= 1` and the `-` root otherwise.
/// Bayes: `T̃(0) = 1` makes the unlabeled terms cancel and `χ = 1/λ`.
pub fn chi_undetected_branch(params: &ModelParams) -> Result<f64> {
    let (l, s2, au) = (params.lambda, params.sigma2, params.alpha_u);
    if params.estimator == Estimator::Bayes {
        return Ok(1.0 / l);
    }
    let a = au / s2 + l;
    let b = 1.0 + l * s2;
    let disc = b * b - 4.0 * a * s2;
    if disc < 0.0 {
        return Err(Error::OutOfRange(format!(
            "undetected solution absent at lambda={l} (discriminant {disc:e})"
        )));
    }
    let root = if l * s2 <= 1.0 { b + disc.sqrt() } else { b - disc.sqrt() };
    Ok(0.5 * root / a)
}

/// Undetected/random boundary: `v_lin = 1` at the trivial point.
/// RMLE `σ²/(1 + √α_u)`, Bayes `σ²/√α_u`.
pub fn critical_chi_u_r(params: &ModelParams, mode: Estimator) -> Result<f64> {
    require_unlabeled(params)?;
    Ok(match mode {
        Estimator::Rmle => params.sigma2 / (1.0 + params.alpha_u.sqrt()),
        Estimator::Bayes => params.sigma2 / params.alpha_u.sqrt(),
    })
}

/// Undetected/detected boundary: `k_lin = 1` at the trivial point.
/// RMLE `σ²/(1 + α_u/(λ0σ²))`, Bayes `σ⁴λ0/α_u`.
pub fn critical_chi_u_d(params: &ModelParams, mode: Estimator) -> Result<f64> {
    require_unlabeled(params)?;
    let (s2, l0, au) = (params.sigma2, params.lambda0, params.alpha_u);
    Ok(match mode {
        Estimator::Rmle => s2 / (1.0 + au / (l0 * s2)),
        Estimator::Bayes => s2 * s2 * l0 / au,
    })
}

/// Variance of the random (`k = 0`) fixed point, `0` when only the trivial
/// one exists.
pub fn random_branch_variance(params: &ModelParams, chi: f64, rule: &GaussHermite) -> Result<f64> {
    let (_, v_lin) = linearization(params, chi);
    if v_lin <= 1.0 {
        return Ok(0.0);
    }
    let scale = chi * chi * params.alpha_u / params.sigma2;
    let excess = |v: f64| -> Result<f64> {
        let (_, m2) = crate::state_evolution::f_moments(params, chi, 0.0, v, rule)?;
        Ok(scale * m2 - v)
    };
    // excess > 0 just above 0 and < 0 above the bound |F| <= 1 gives.
    let hi = scale * 1.01 + 1e-300;
    let mut lo = hi * 1e-12;
    while excess(lo)? <= 0.0 {
        if lo < 1e-300 {
            return Ok(0.0);
        }
        lo *= 1e-3;
    }
    bisect(excess, lo, hi, 1e-15 * hi)
}

/// `α_u χ/(λ0σ⁴) ∫Dz T(√(v/σ²) z, χ/σ²) - 1`, the growth of `k` around the
/// `k = 0` point with variance `v`, minus one.
pub fn detected_instability_margin(params: &ModelParams, chi: f64, v: f64, rule: &GaussHermite) -> Result<f64> {
    let s4 = params.sigma2 * params.sigma2;
    let integral = t_average(params, chi, 0.0, v, rule)?;
    Ok(params.alpha_u * chi / (params.lambda0 * s4) * integral - 1.0)
}

/// Detected/random boundary for `ρ = ½` without labels: the `χ` above the
/// undetected/random boundary at which the random fixed point turns unstable
/// towards `k ≠ 0`. Inside the RSB region this is only a replica-symmetric
/// estimate.
pub fn detected_random_boundary(params: &ModelParams, mode: Estimator, rule: &GaussHermite) -> Result<f64> {
    if params.rho != 0.5 || params.alpha_l != 0.0 {
        return Err(Error::OutOfRange("random branch exists only for rho = 1/2 without labels".into()));
    }
    let p = params.with_estimator(mode);
    let chi_ur = critical_chi_u_r(&p, mode)?;
    let upper = match mode {
        Estimator::Rmle => p.sigma2,
        Estimator::Bayes => 10.0 * p.sigma2,
    };
    let margin = |chi: f64| -> Result<f64> {
        let v = random_branch_variance(&p, chi, rule)?;
        detected_instability_margin(&p, chi, v, rule)
    };
    let steps = 64;
    let mut a = chi_ur * (1.0 + 1e-9);
    let mut fa = margin(a)?;
    for i in 1..=steps {
        let b = chi_ur + (upper - chi_ur) * (i as f64 / steps as f64) * (1.0 - 1e-6);
        let fb = match margin(b) {
            Ok(f) => f,
            Err(Error::Singular { .. }) => break,
            Err(e) => return Err(e),
        };
        if fa.signum() != fb.signum() {
            return bisect(margin, a, b, 1e-10);
        }
        a = b;
        fa = fb;
    }
    Err(Error::OutOfRange(format!(
        "no detected/random crossing in ({chi_ur}, {upper})"
    )))
}

/// AT integral `(α_u χ²/σ⁴) ∫Dz [ρ T²(𝒫) + (1-ρ) T²(𝒬)]`; values of at
/// least 1 signal replica symmetry breaking. A singular `T` returns `+∞`.
pub fn at_instability(params: &ModelParams, chi: f64, fixed_point: &OrderParams, mode: Estimator) -> f64 {
    at_instability_with(params, chi, fixed_point, mode, &GaussHermite::default())
}

pub fn at_instability_with(params: &ModelParams, chi: f64, fixed_point: &OrderParams, mode: Estimator, rule: &GaussHermite) -> f64 {
    let p = params.with_estimator(mode);
    let s4 = p.sigma2 * p.sigma2;
    match t2_average(&p, chi, fixed_point.k, fixed_point.v, rule) {
        Ok(i) => p.alpha_u * chi * chi / s4 * i,
        Err(_) => f64::INFINITY,
    }
}

/// Runs state evolution from both canonical starts and labels the point.
pub fn classify_phase(params: &ModelParams, chi: f64, opts: &SeOptions, rule: &GaussHermite) -> Result<PhaseReport> {
    params.validate()?;
    let mode = params.estimator;
    let (k_lin, v_lin) = linearization(params, chi);
    let mut report = PhaseReport {
        chi,
        params: *params,
        phase: Phase::Indeterminate,
        rsb_kind: None,
        k_star: f64::NAN,
        v_star: f64::NAN,
        k_lin,
        v_lin,
        at_integral: f64::NAN,
        margins: [k_lin - 1.0, v_lin - 1.0, f64::NAN],
        converged: false,
    };
    let finish = |mut r: PhaseReport, op: &OrderParams| {
        r.k_star = op.k;
        r.v_star = op.v;
        r.at_integral = at_instability_with(params, chi, op, mode, rule);
        r.margins[2] = r.at_integral - 1.0;
        r.converged = true;
        r
    };

    // Iteration stops once a step moves less than `eps`, which leaves it about
    // `eps / (1 - rate)` away from a fixed point contracting at `rate`.
    let stable = params.has_trivial_fixed_point() && k_lin < 1.0 && v_lin < 1.0;
    let zero_tol = if stable {
        ZERO_TOL.max(10.0 * opts.eps / (1.0 - k_lin.max(v_lin)))
    } else {
        ZERO_TOL
    };
    if stable {
        let fp = se_fixed_point(params, chi, OrderParams::uninformed(chi, params.lambda0), opts, rule)?;
        if fp.converged && fp.op.k.abs() < zero_tol && fp.op.v < zero_tol {
            let trivial = OrderParams::new(chi, 0.0, 0.0, params.lambda0);
            let mut r = finish(report, &trivial);
            r.phase = Phase::Undetected;
            return Ok(r);
        }
    }

    let fp = se_fixed_point(params, chi, OrderParams::informed(chi, params.lambda0), opts, rule)?;
    if !fp.converged {
        report.k_star = fp.op.k;
        report.v_star = fp.op.v;
        return Ok(report);
    }
    report = finish(report, &fp.op);
    if stable && fp.op.k.abs() < zero_tol && fp.op.v < zero_tol {
        let trivial = OrderParams::new(chi, 0.0, 0.0, params.lambda0);
        report = finish(report, &trivial);
        report.phase = Phase::Undetected;
        return Ok(report);
    }
    let detected = fp.op.k > ZERO_TOL;
    if report.at_integral >= 1.0 {
        report.phase = Phase::Rsb;
        report.rsb_kind = Some(if detected { RsbKind::Mixed } else { RsbKind::Random });
    } else if detected {
        report.phase = Phase::Detected;
    } else if fp.op.v < ZERO_TOL {
        report.phase = Phase::Undetected;
    } else {
        // A stable random point; merged with RSB like the unstable one.
        report.phase = Phase::Rsb;
        report.rsb_kind = Some(RsbKind::Random);
    }
    Ok(report)
}

/// Undetected/detected boundary in `α_u` at the configured `λ`:
/// Bayes `α_u = SNR⁻² = (λ0σ²)²`, RMLE `α_u = ((λ - λ0)σ² - 1) λ0σ²`.
pub fn bo_heatmap_boundary(params: &ModelParams) -> Result<f64> {
    let (l, l0, s2) = (params.lambda, params.lambda0, params.sigma2);
    let alpha_u = match params.estimator {
        Estimator::Bayes => (l0 * s2) * (l0 * s2),
        Estimator::Rmle => ((l - l0) * s2 - 1.0) * l0 * s2,
    };
    if alpha_u < 0.0 {
        return Err(Error::OutOfRange(format!(
            "boundary at alpha_u={alpha_u} lies outside the physical region"
        )));
    }
    Ok(alpha_u)
}

/// `(α_u, χ)` along `λ = λ0` for the Bayes estimator.
pub fn nishimori_line(params: &ModelParams, alpha_u_grid: &[f64], opts: &SeOptions, rule: &GaussHermite) -> Result<Vec<(f64, f64)>> {
    let base = ModelParams {
        estimator: Estimator::Bayes,
        lambda: params.lambda0,
        ..*params
    };
    alpha_u_grid
        .iter()
        .map(|&au| {
            let p = base.with_alpha_u(au);
            let chi = chi_from_lambda(&p, p.lambda0, Branch::Informed, opts, rule)
                .or_else(|_| chi_from_lambda(&p, p.lambda0, Branch::Uninformed, opts, rule))?;
            Ok((au, chi))
        })
        .collect()
}

/// `T(0, χ/σ²)` for the requested estimator.
pub fn t_at_origin(params: &ModelParams, chi: f64, mode: Estimator) -> Result<f64> {
    kernel_pair(mode, 0.0, chi / params.sigma2, params.rho).map(|(_, t)| t)
}
