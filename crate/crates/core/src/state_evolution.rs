//! State evolution: the scalar recursion for the overlap `k` and variance `v`
//! of the estimate, `ŵ_i ≈ k w0_i + √v z_i`, at a fixed susceptibility `χ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Estimator, ModelParams};
use crate::potentials::{f_rmle, f_tilde, half_log_odds, kernel_pair};
use crate::quadrature::GaussHermite;

/// Macroscopic state `(χ, k, v)` plus the derived `ṽ = k²/λ0 + v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderParams {
    pub chi: f64,
    pub k: f64,
    pub v: f64,
    pub v_tilde: f64,
    pub iter: usize,
}

impl OrderParams {
    pub fn new(chi: f64, k: f64, v: f64, lambda0: f64) -> Self {
        OrderParams {
            chi,
            k,
            v,
            v_tilde: k * k / lambda0 + v,
            iter: 0,
        }
    }

    /// Start just off the trivial point.
    pub fn uninformed(chi: f64, lambda0: f64) -> Self {
        OrderParams::new(chi, 1e-6, 1e-6, lambda0)
    }

    /// Start at perfect alignment with the true center.
    pub fn informed(chi: f64, lambda0: f64) -> Self {
        OrderParams::new(chi, 1.0, 0.0, lambda0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeOptions {
    /// Relative tolerance on `|Δk| + |Δv|`.
    pub eps: f64,
    pub max_iter: usize,
    /// Weight of the previous iterate, in `[0, 1)`.
    pub damping: f64,
}

impl Default for SeOptions {
    fn default() -> Self {
        SeOptions {
            eps: 1e-8,
            max_iter: 20_000,
            damping: 0.0,
        }
    }
}

/// Result of [`se_fixed_point`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub op: OrderParams,
    pub converged: bool,
    /// `|Δk| + |Δv|` of the last step.
    pub residual: f64,
}

/// Means of the two cluster-conditional fields `𝒫` (label +1) and `𝒬`
/// (label -1): `±k/(λ0 σ²)`, both with standard deviation `√(ṽ/σ²)`.
fn field_moments(params: &ModelParams, k: f64, v: f64) -> (f64, f64) {
    let v_tilde = k * k / params.lambda0 + v;
    (k / (params.lambda0 * params.sigma2), (v_tilde / params.sigma2).max(0.0).sqrt())
}

/// `∫Dz g(mean + sd z)`. The kernels peak (Bayes, RMLE below `t = 1`) or
/// jump (RMLE above it) where the field equals `-½ ln(ρ/(1-ρ))`, so the rule
/// is split there.
fn field_average<const D: usize>(
    rho: f64,
    mean: f64,
    sd: f64,
    rule: &GaussHermite,
    mut g: impl FnMut(f64) -> Result<[f64; D]>,
) -> Result<[f64; D]> {
    if sd == 0.0 {
        return g(mean);
    }
    let centre = -half_log_odds(rho);
    rule.try_integrate_at((centre - mean) / sd, |z| g(mean + sd * z))
}

/// `∫Dz [ρ f(𝒫) + (1-ρ) f(𝒬)]`, skipping a class of zero weight.
fn class_average(
    params: &ModelParams,
    k: f64,
    v: f64,
    rule: &GaussHermite,
    mut f: impl FnMut(f64, f64) -> Result<f64>,
) -> Result<f64> {
    let rho = params.rho;
    let (mean, sd) = field_moments(params, k, v);
    let mut acc = 0.0;
    if rho > 0.0 {
        acc += rho * field_average(rho, mean, sd, rule, |p| Ok([f(p, 1.0)?]))?[0];
    }
    if rho < 1.0 {
        acc += (1.0 - rho) * field_average(rho, -mean, sd, rule, |p| Ok([f(p, -1.0)?]))?[0];
    }
    Ok(acc)
}

/// `(∫ y F, ∫ F²)`, the label-signed mean and second moment of `F` over both
/// clusters.
pub fn f_moments(params: &ModelParams, chi: f64, k: f64, v: f64, rule: &GaussHermite) -> Result<(f64, f64)> {
    let t = chi / params.sigma2;
    let rho = params.rho;
    let estimator = params.estimator;
    let (mean, sd) = field_moments(params, k, v);
    let eval = |p: f64| -> Result<[f64; 2]> {
        let f = match estimator {
            Estimator::Rmle => f_rmle(p, t, rho)?,
            Estimator::Bayes => f_tilde(p, rho),
        };
        Ok([f, f * f])
    };
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    if rho > 0.0 {
        let [a, b] = field_average(rho, mean, sd, rule, eval)?;
        m1 += rho * a;
        m2 += rho * b;
    }
    if rho < 1.0 {
        let [a, b] = field_average(rho, -mean, sd, rule, eval)?;
        m1 -= (1.0 - rho) * a;
        m2 += (1.0 - rho) * b;
    }
    Ok((m1, m2))
}

/// `∫Dz [ρ T(𝒫) + (1-ρ) T(𝒬)]` at susceptibility `chi`.
pub fn t_average(params: &ModelParams, chi: f64, k: f64, v: f64, rule: &GaussHermite) -> Result<f64> {
    let t = chi / params.sigma2;
    class_average(params, k, v, rule, |p, _| kernel_pair(params.estimator, p, t, params.rho).map(|(_, tv)| tv))
}

/// `∫Dz [ρ T²(𝒫) + (1-ρ) T²(𝒬)]` at susceptibility `chi`.
pub fn t2_average(params: &ModelParams, chi: f64, k: f64, v: f64, rule: &GaussHermite) -> Result<f64> {
    let t = chi / params.sigma2;
    class_average(params, k, v, rule, |p, _| {
        kernel_pair(params.estimator, p, t, params.rho).map(|(_, tv)| tv * tv)
    })
}

/// One state-evolution step at fixed `chi` for the configured estimator.
pub fn se_step(op: &OrderParams, params: &ModelParams, chi: f64, rule: &GaussHermite) -> Result<OrderParams> {
    if !(chi > 0.0) {
        return Err(Error::InvalidParams(format!("chi must be positive, got {chi}")));
    }
    let inv_s2 = 1.0 / params.sigma2;
    let (m1, m2) = if params.alpha_u > 0.0 {
        f_moments(params, chi, op.k, op.v, rule)?
    } else {
        (0.0, 0.0)
    };
    let k = chi * (params.alpha_l * inv_s2 + params.alpha_u * inv_s2 * m1);
    let v = chi * chi * (params.alpha_l * inv_s2 + params.alpha_u * inv_s2 * m2);
    let mut next = OrderParams::new(chi, k, v.max(0.0), params.lambda0);
    next.iter = op.iter + 1;
    Ok(next)
}

pub fn se_step_rmle(op: &OrderParams, params: &ModelParams, chi: f64, rule: &GaussHermite) -> Result<OrderParams> {
    se_step(op, &params.with_estimator(Estimator::Rmle), chi, rule)
}

pub fn se_step_bayes(op: &OrderParams, params: &ModelParams, chi: f64, rule: &GaussHermite) -> Result<OrderParams> {
    se_step(op, &params.with_estimator(Estimator::Bayes), chi, rule)
}

/// `steps` iterations from `init`, including `init` itself as entry 0.
pub fn se_trajectory(
    params: &ModelParams,
    chi: f64,
    init: OrderParams,
    steps: usize,
    rule: &GaussHermite,
) -> Result<Vec<OrderParams>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut cur = OrderParams { chi, ..init };
    out.push(cur);
    for _ in 0..steps {
        cur = se_step(&cur, params, chi, rule)?;
        out.push(cur);
    }
    Ok(out)
}

/// Iterates [`se_step`] until `|Δk| + |Δv| < eps (1 + |k| + |v|)`.
pub fn se_fixed_point(
    params: &ModelParams,
    chi: f64,
    init: OrderParams,
    opts: &SeOptions,
    rule: &GaussHermite,
) -> Result<FixedPoint> {
    let mut cur = OrderParams::new(chi, init.k, init.v, params.lambda0);
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let raw = se_step(&cur, params, chi, rule)?;
        let (k, v) = if opts.damping > 0.0 {
            let d = opts.damping;
            ((1.0 - d) * raw.k + d * cur.k, (1.0 - d) * raw.v + d * cur.v)
        } else {
            (raw.k, raw.v)
        };
        if !(k.is_finite() && v.is_finite()) {
            return Err(Error::Divergence {
                iteration: raw.iter,
                detail: format!("state evolution produced k={k}, v={v}"),
            });
        }
        residual = (k - cur.k).abs() + (v - cur.v).abs();
        let mut next = OrderParams::new(chi, k, v, params.lambda0);
        next.iter = raw.iter;
        cur = next;
        if residual < opts.eps * (1.0 + k.abs() + v.abs()) {
            return Ok(FixedPoint {
                op: cur,
                converged: true,
                residual,
            });
        }
    }
    Ok(FixedPoint {
        op: cur,
        converged: false,
        residual,
    })
}

/// Regularization strength whose fixed point has susceptibility `chi`:
/// `λ = 1/χ - α/σ² + (α_u/σ²) ∫Dz [ρ T(𝒫) + (1-ρ) T(𝒬)]`.
pub fn lambda_from_chi(params: &ModelParams, chi: f64, fixed_point: &OrderParams, rule: &GaussHermite) -> Result<f64> {
    let inv_s2 = 1.0 / params.sigma2;
    let integral = if params.alpha_u > 0.0 {
        t_average(params, chi, fixed_point.k, fixed_point.v, rule)?
    } else {
        0.0
    };
    Ok(1.0 / chi - params.alpha() * inv_s2 + params.alpha_u * inv_s2 * integral)
}

/// Linear growth factors of `k` and `v` around the trivial point `(0, 0)`:
/// `(α_u χ T(0)/(λ0 σ⁴), α_u χ² T(0)²/σ⁴)`. Infinite once `T(0, χ/σ²)`
/// is singular.
pub fn linearization(params: &ModelParams, chi: f64) -> (f64, f64) {
    let t0 = match kernel_pair(params.estimator, 0.0, chi / params.sigma2, params.rho) {
        Ok((_, tv)) => tv,
        Err(_) => return (f64::INFINITY, f64::INFINITY),
    };
    let s4 = params.sigma2 * params.sigma2;
    (
        params.alpha_u * chi * t0 / (params.lambda0 * s4),
        params.alpha_u * chi * chi * t0 * t0 / s4,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn symmetric(alpha_u: f64) -> ModelParams {
        ModelParams {
            alpha_u,
            ..Default::default()
        }
    }

    #[test]
    fn trivial_point_is_fixed() {
        let rule = GaussHermite::default();
        for est in [Estimator::Rmle, Estimator::Bayes] {
            let p = symmetric(2.0).with_estimator(est);
            let next = se_step(&OrderParams::new(0.3, 0.0, 0.0, 1.0), &p, 0.3, &rule).unwrap();
            assert_eq!((next.k, next.v), (0.0, 0.0));
        }
    }

    #[test]
    fn labeled_only_closed_form() {
        let rule = GaussHermite::default();
        let p = ModelParams {
            alpha_l: 1.0,
            alpha_u: 0.0,
            ..Default::default()
        };
        for est in [Estimator::Rmle, Estimator::Bayes] {
            let p = p.with_estimator(est);
            let next = se_step(&OrderParams::new(0.5, 0.7, 0.2, 1.0), &p, 0.5, &rule).unwrap();
            assert_eq!((next.k, next.v), (0.5, 0.25));
            let fp = se_fixed_point(&p, 0.5, OrderParams::informed(0.5, 1.0), &SeOptions::default(), &rule).unwrap();
            assert!(fp.converged);
            assert_eq!((fp.op.k, fp.op.v), (0.5, 0.25));
        }
    }

    #[test]
    fn undetected_contraction_rates() {
        let rule = GaussHermite::default();
        let p = symmetric(1.0);
        let chi = 0.3;
        let (k_lin, v_lin) = linearization(&p, chi);
        assert!((k_lin - 0.3 / 0.7).abs() < 1e-12);
        assert!((v_lin - 0.09 / 0.49).abs() < 1e-12);
        let mut op = OrderParams::new(chi, 1e-6, 1e-6, 1.0);
        for _ in 0..3 {
            let next = se_step(&op, &p, chi, &rule).unwrap();
            // v is driven by both k² / λ0 and v; the k-ratio is clean.
            assert!((next.k / op.k - k_lin).abs() < 1e-5, "{} vs {k_lin}", next.k / op.k);
            assert!(next.v < op.v);
            op = next;
        }
        let tight = SeOptions { eps: 1e-14, ..Default::default() };
        let fp = se_fixed_point(&p, chi, OrderParams::uninformed(chi, 1.0), &tight, &rule).unwrap();
        assert!(fp.converged);
        assert!(fp.op.k.abs() < 1e-9 && fp.op.v.abs() < 1e-9);
    }

    #[test]
    fn detected_fixed_point() {
        let rule = GaussHermite::default();
        let p = symmetric(5.0);
        let (k_lin, _) = linearization(&p, 0.3);
        assert!((k_lin - 1.5 / 0.7).abs() < 1e-12);
        let fp = se_fixed_point(&p, 0.3, OrderParams::informed(0.3, 1.0), &SeOptions::default(), &rule).unwrap();
        assert!(fp.converged);
        assert!(fp.op.k > 0.0 && fp.op.v > 0.0);
    }

    #[test]
    fn lambda_of_trivial_problem() {
        let rule = GaussHermite::default();
        let p = ModelParams {
            alpha_u: 0.0,
            ..Default::default()
        };
        let op = OrderParams::new(0.4, 0.0, 0.0, 1.0);
        assert!((lambda_from_chi(&p, 0.4, &op, &rule).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn lambda_on_undetected_branch_matches_closed_form() {
        let rule = GaussHermite::default();
        for alpha_u in [0.5, 1.0, 2.0] {
            let p = symmetric(alpha_u);
            for chi in [0.05, 0.1, 0.2, 0.3] {
                let op = OrderParams::new(chi, 0.0, 0.0, 1.0);
                let lam = lambda_from_chi(&p, chi, &op, &rule).unwrap();
                let closed = 1.0 / chi - alpha_u + alpha_u / (1.0 - chi);
                assert!((lam - closed).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn nishimori_identity_holds_on_bayes_fixed_point() {
        let rule = GaussHermite::default();
        let p = symmetric(3.0).with_estimator(Estimator::Bayes);
        // On λ = λ0 the susceptibility solves λ(χ) = λ0; locate it by bisection.
        let lambda_at = |chi: f64| {
            let fp = se_fixed_point(&p, chi, OrderParams::informed(chi, 1.0), &SeOptions { eps: 1e-13, ..Default::default() }, &rule).unwrap();
            (lambda_from_chi(&p, chi, &fp.op, &rule).unwrap(), fp.op)
        };
        let (mut lo, mut hi) = (0.05, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if lambda_at(mid).0 > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (_, op) = lambda_at(0.5 * (lo + hi));
        assert!(op.k > 0.1);
        assert!((op.v - op.k * (1.0 - op.k)).abs() < 1e-6, "k={}, v={}", op.k, op.v);
    }

    #[test]
    fn non_positive_chi_is_rejected() {
        let rule = GaussHermite::new(21);
        assert!(se_step(&OrderParams::new(0.0, 0.0, 0.0, 1.0), &symmetric(1.0), 0.0, &rule).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn odd_in_k_at_half(k in -2.0f64..2.0, v in 0.0f64..2.0, chi in 0.05f64..0.9, bayes in any::<bool>()) {
            let rule = GaussHermite::new(61);
            let est = if bayes { Estimator::Bayes } else { Estimator::Rmle };
            let p = symmetric(2.0).with_estimator(est);
            let a = se_step(&OrderParams::new(chi, k, v, 1.0), &p, chi, &rule).unwrap();
            let b = se_step(&OrderParams::new(chi, -k, v, 1.0), &p, chi, &rule).unwrap();
            prop_assert!((a.k + b.k).abs() < 1e-12);
            prop_assert!((a.v - b.v).abs() < 1e-12);
            prop_assert!(a.v >= 0.0);
        }

        #[test]
        fn variance_stays_non_negative(k in -2.0f64..2.0, v in 0.0f64..2.0, rho in 0.0f64..1.0, al in 0.0f64..2.0) {
            let rule = GaussHermite::new(41);
            let p = ModelParams { rho, alpha_l: al, alpha_u: 1.5, ..Default::default() };
            let a = se_step(&OrderParams::new(0.4, k, v, 1.0), &p, 0.4, &rule).unwrap();
            prop_assert!(a.v >= 0.0);
        }
    }
}
