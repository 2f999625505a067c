//! Scalar kernels of the message-passing and state-evolution updates.
//!
//! Two families are provided. The RMLE kernels `F(p, t)` and `T(p, t)` are
//! first and second derivatives in `p` of `max_y G(y|p, t)` with
//! `G(y|p, t) = -y²/2 + ln(ρ e^h + (1-ρ) e^{-h})`, `h = p + √t y`. The Bayes
//! kernels `F̃(p)` and `T̃(p)` are the posterior mean of the hidden label and
//! its derivative.

use crate::error::{Error, Result};
use crate::params::Estimator;

/// Denominators of `T(p, t)` at or below this value are reported as singular.
pub const SINGULAR_DENOMINATOR: f64 = 1e-10;

const Y_STAR_MAX_ITER: usize = 200;
const Y_STAR_TOL: f64 = 1e-13;

/// `½ ln(ρ / (1-ρ))`, the shift turning `F̃` into a plain `tanh`.
#[inline]
pub(crate) fn half_log_odds(rho: f64) -> f64 {
    0.5 * (rho / (1.0 - rho)).ln()
}

#[inline]
fn sech2(u: f64) -> f64 {
    // 4 e^{-2|u|} / (1 + e^{-2|u|})², finite for every u.
    let e = (-2.0 * u.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// `ln(ρ e^h + (1-ρ) e^{-h})` evaluated without overflow.
pub fn log_mixture(h: f64, rho: f64) -> f64 {
    if rho >= 1.0 {
        return h;
    }
    if rho <= 0.0 {
        return -h;
    }
    let a = rho.ln() + h;
    let b = (1.0 - rho).ln() - h;
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Posterior mean of a ±1 label given field `p`.
pub fn f_tilde(p: f64, rho: f64) -> f64 {
    if rho >= 1.0 {
        1.0
    } else if rho <= 0.0 {
        -1.0
    } else {
        (p + half_log_odds(rho)).tanh()
    }
}

/// `dF̃/dp = 4ρ(1-ρ) / (ρe^p + (1-ρ)e^{-p})²`.
pub fn t_tilde(p: f64, rho: f64) -> f64 {
    if rho <= 0.0 || rho >= 1.0 {
        0.0
    } else {
        sech2(p + half_log_odds(rho))
    }
}

/// `g(y|p, t)`.
pub fn g_fn(y: f64, p: f64, t: f64, rho: f64) -> f64 {
    log_mixture(p + t.sqrt() * y, rho)
}

/// `G(y|p, t) = -y²/2 + g(y|p, t)`.
pub fn big_g(y: f64, p: f64, t: f64, rho: f64) -> f64 {
    -0.5 * y * y + g_fn(y, p, t, rho)
}

/// Root of a function that is non-decreasing on `[lo, hi]` with
/// `r(lo) <= 0 <= r(hi)`. Newton steps are accepted only while they stay
/// inside the shrinking bracket; otherwise the bracket is bisected.
fn monotone_root(
    r: impl Fn(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    start: f64,
) -> Result<f64> {
    let mut y = start.clamp(lo, hi);
    let mut last = f64::INFINITY;
    for _ in 0..Y_STAR_MAX_ITER {
        let (val, slope) = r(y);
        last = val.abs();
        if last < Y_STAR_TOL {
            return Ok(y);
        }
        if val < 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        if hi - lo <= 4.0 * f64::EPSILON * (1.0 + y.abs()) {
            return Ok(0.5 * (lo + hi));
        }
        let newton = y - val / slope;
        y = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NoConvergence {
        what: "y* solver",
        iterations: Y_STAR_MAX_ITER,
        residual: last,
    })
}

/// Global maximizer of `G(y|p, t)` over `y`.
///
/// Every stationary point satisfies `y = √t F̃(p + √t y)` and therefore lies
/// in `[-√t, √t]`. For `t <= 1` the residual `y - √t F̃(p + √t y)` is
/// monotone and the root is unique. For `t > 1` it decreases only where
/// `T̃ > 1/t`, i.e. on a single interval, so each maximum sits in one of the
/// two increasing pieces around it; both are solved and compared by `G`.
pub fn solve_y_star(p: f64, t: f64, rho: f64) -> Result<f64> {
    if !(t >= 0.0) || !p.is_finite() || !t.is_finite() {
        return Err(Error::InvalidParams(format!(
            "y* needs finite p and t >= 0, got p={p}, t={t}"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let s = t.sqrt();
    if rho <= 0.0 || rho >= 1.0 {
        return Ok(s * f_tilde(0.0, rho));
    }
    let r = |y: f64| {
        let h = p + s * y;
        (y - s * f_tilde(h, rho), 1.0 - t * t_tilde(h, rho))
    };
    let start = s * f_tilde(p, rho);
    if t <= 1.0 {
        return monotone_root(r, -s, s, start);
    }

    // r' < 0 exactly where |p + s y + c| < acosh(√t).
    let c = half_log_odds(rho);
    let a = s.acosh();
    let y_left = ((-a - p - c) / s).min(s);
    let y_right = ((a - p - c) / s).max(-s);

    let mut candidates = Vec::with_capacity(2);
    if y_left > -s && r(y_left).0 >= 0.0 {
        candidates.push(monotone_root(r, -s, y_left, start.min(y_left))?);
    }
    if y_right < s && r(y_right).0 <= 0.0 {
        candidates.push(monotone_root(r, y_right, s, start.max(y_right))?);
    }
    match candidates.as_slice() {
        [] => Err(Error::NoConvergence {
            what: "y* bracketing",
            iterations: 0,
            residual: r(start).0.abs(),
        }),
        [y] => Ok(*y),
        [y1, y2] => {
            let g1 = big_g(*y1, p, t, rho);
            let g2 = big_g(*y2, p, t, rho);
            if (g1 - g2).abs() <= 1e-12 * (1.0 + g1.abs()) && (y1 - y2).abs() > 1e-8 {
                log::debug!("twin maxima of G at p={p}, t={t}, rho={rho}: y={y1} and y={y2}");
            }
            Ok(if g2 > g1 { *y2 } else { *y1 })
        }
        _ => unreachable!(),
    }
}

/// `F(p, t) = F̃(p + √t y*)`.
pub fn f_rmle(p: f64, t: f64, rho: f64) -> Result<f64> {
    let y = solve_y_star(p, t, rho)?;
    Ok(f_tilde(p + t.sqrt() * y, rho))
}

/// `T(p, t) = (1 - F²) / (1 - t(1 - F²))`.
pub fn t_rmle(p: f64, t: f64, rho: f64) -> Result<f64> {
    rmle_pair(p, t, rho).map(|(_, tv)| tv)
}

/// `(F, T)` from a single `y*` solve.
pub fn rmle_pair(p: f64, t: f64, rho: f64) -> Result<(f64, f64)> {
    let y = solve_y_star(p, t, rho)?;
    let h = p + t.sqrt() * y;
    // 1 - F² is evaluated as sech² to keep relative accuracy in the tails.
    let one_minus_f2 = t_tilde(h, rho);
    let denominator = 1.0 - t * one_minus_f2;
    if denominator <= SINGULAR_DENOMINATOR {
        return Err(Error::Singular { p, t, denominator });
    }
    Ok((f_tilde(h, rho), one_minus_f2 / denominator))
}

/// `(F, T)` for the requested estimator. `t` is ignored in Bayes mode.
#[inline]
pub fn kernel_pair(estimator: Estimator, p: f64, t: f64, rho: f64) -> Result<(f64, f64)> {
    match estimator {
        Estimator::Rmle => rmle_pair(p, t, rho),
        Estimator::Bayes => Ok((f_tilde(p, rho), t_tilde(p, rho))),
    }
}

/// Upper standard-normal tail `∫_x^∞ Dz`.
pub fn gaussian_tail_q(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Every kernel value at one `(p, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialEval {
    pub p: f64,
    pub t: f64,
    /// Maximizer of `G` (RMLE only).
    pub y_star: Option<f64>,
    pub f_val: f64,
    pub t_val: f64,
    /// `G` at the maximizer (RMLE only).
    pub g_val: Option<f64>,
}

impl PotentialEval {
    pub fn new(estimator: Estimator, p: f64, t: f64, rho: f64) -> Result<Self> {
        match estimator {
            Estimator::Bayes => Ok(PotentialEval {
                p,
                t,
                y_star: None,
                f_val: f_tilde(p, rho),
                t_val: t_tilde(p, rho),
                g_val: None,
            }),
            Estimator::Rmle => {
                let y = solve_y_star(p, t, rho)?;
                let (f_val, t_val) = rmle_pair(p, t, rho)?;
                Ok(PotentialEval {
                    p,
                    t,
                    y_star: Some(y),
                    f_val,
                    t_val,
                    g_val: Some(big_g(y, p, t, rho)),
                })
            }
        }
    }
}
