//! Gauss–Hermite rules for expectations over a standard normal variable.
//!
//! Nodes are eigenvalues of the Jacobi matrix of the probabilists' Hermite
//! polynomials, polished by Newton steps on the orthonormal recurrence.
//! Weights come from the Christoffel sum, accumulated with rescaling so rules
//! with thousands of nodes do not overflow.
//!
//! Integrands with a kink, jump or narrow peak at a known point go through
//! [`GaussHermite::try_integrate_at`] instead: Gauss–Legendre panels graded
//! geometrically towards that point on either side.

use crate::error::{Error, Result};

pub const DEFAULT_NODES: usize = 201;

/// Weights below this are dropped; their nodes sit beyond |z| ≈ 13.
const PRUNE_WEIGHT: f64 = 1e-40;

/// Half-width of the range covered by the panel rule; the normal mass beyond
/// is below 1e-22.
const PANEL_RANGE: f64 = 10.0;
/// Panels between the break point and one unit away from it, each half the
/// width of the next.
const GRADED_LEVELS: i32 = 16;
/// Width of the panels beyond the graded zone.
const OUTER_PANEL: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    order: usize,
    /// Gauss–Legendre rule on `[-1, 1]` used inside each panel.
    legendre: Vec<(f64, f64)>,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

impl Default for GaussHermite {
    fn default() -> Self {
        GaussHermite::new(DEFAULT_NODES)
    }
}

/// Eigenvalues of a symmetric tridiagonal matrix (implicit QL with shifts).
/// `off[i]` couples rows `i` and `i + 1`.
fn tridiagonal_eigenvalues(mut diag: Vec<f64>, off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&off[..n - 1]);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 100, "tridiagonal QL failed to converge");
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    diag
}

/// `(q_n(z), q_{n-1}(z), ln Σ_{k<n} q_k(z)²)` for the orthonormal
/// probabilists' Hermite polynomials; the first two share an unknown positive
/// scale, which cancels in Newton steps.
fn hermite_eval(n: usize, z: f64) -> (f64, f64, f64) {
    const BIG: f64 = 1e150;
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sum = 0.0;
    let mut log_scale = 0.0;
    for k in 0..n {
        sum += cur * cur;
        let next = (z * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
        if cur.abs() > BIG {
            cur /= BIG;
            prev /= BIG;
            sum /= BIG * BIG;
            log_scale += 2.0 * BIG.ln();
        }
    }
    (cur, prev, sum.ln() + log_scale)
}

impl GaussHermite {
    /// Rule with `order` nodes, exact for polynomials of degree `2 order - 1`.
    pub fn new(order: usize) -> Self {
        assert!(order > 0, "Gauss-Hermite order must be positive");
        let off: Vec<f64> = (1..order).map(|k| (k as f64).sqrt()).collect();
        let mut roots = tridiagonal_eigenvalues(vec![0.0; order], &off);
        roots.sort_by(|a, b| a.total_cmp(b));

        let sqrt_n = (order as f64).sqrt();
        let mut nodes = Vec::with_capacity(order);
        let mut weights = Vec::with_capacity(order);
        for (i, &z0) in roots.iter().enumerate() {
            // Nodes come in ± pairs; polish the non-negative half only.
            if i < order / 2 {
                continue;
            }
            let mut z = if order % 2 == 1 && i == order / 2 { 0.0 } else { z0 };
            if z != 0.0 {
                for _ in 0..4 {
                    let (qn, qn1, _) = hermite_eval(order, z);
                    let dz = qn / (sqrt_n * qn1);
                    z -= dz;
                    if dz.abs() < 1e-15 * z.abs() {
                        break;
                    }
                }
            }
            let (_, _, log_sum) = hermite_eval(order, z);
            let w = (-log_sum).exp();
            if w >= PRUNE_WEIGHT {
                nodes.push(z);
                weights.push(w);
            }
        }
        // Mirror to the negative half.
        let mut full_nodes: Vec<f64> = nodes.iter().rev().filter(|&&z| z > 0.0).map(|z| -z).collect();
        let mut full_weights: Vec<f64> = nodes
            .iter()
            .zip(&weights)
            .rev()
            .filter(|(&z, _)| z > 0.0)
            .map(|(_, &w)| w)
            .collect();
        full_nodes.extend_from_slice(&nodes);
        full_weights.extend_from_slice(&weights);
        GaussHermite {
            nodes: full_nodes,
            weights: full_weights,
            order,
            legendre: gauss_legendre((order / 25).clamp(4, 32)),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Nodes actually used after pruning negligible weights.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫ Dz f(z)` with `Dz` the standard normal measure.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * f(z))
            .sum()
    }

    /// As [`integrate`](Self::integrate) for fallible integrands.
    pub fn try_integrate(&self, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
        let mut acc = 0.0;
        for (&z, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(z)?;
        }
        Ok(acc)
    }
}

impl GaussHermite {
    /// `∫ Dz f(z)` for integrands that are smooth except at `z = b`, for
    /// several outputs of one evaluation at once.
    pub fn try_integrate_at<const D: usize>(
        &self,
        b: f64,
        mut f: impl FnMut(f64) -> Result<[f64; D]>,
    ) -> Result<[f64; D]> {
        let mut acc = [0.0; D];
        if !(b.abs() < PANEL_RANGE) {
            for (&z, &w) in self.nodes.iter().zip(&self.weights) {
                let v = f(z)?;
                for d in 0..D {
                    acc[d] += w * v[d];
                }
            }
            return Ok(acc);
        }
        let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        for side in [-1.0, 1.0] {
            let reach = if side > 0.0 { PANEL_RANGE - b } else { PANEL_RANGE + b };
            let inner = reach.min(1.0);
            // Offsets from `b`: 0, inner 2^-L, ..., inner / 2, inner, then
            // equal panels out to the end of the range.
            let mut edges = vec![0.0];
            edges.extend((0..=GRADED_LEVELS).rev().map(|l| inner * 0.5f64.powi(l)));
            let outer = ((reach - inner) / OUTER_PANEL).ceil() as usize;
            edges.extend((1..=outer).map(|j| inner + (reach - inner) * j as f64 / outer as f64));
            for e in edges.windows(2) {
                let (mid, half) = (0.5 * (e[0] + e[1]), 0.5 * (e[1] - e[0]));
                for &(x, w) in &self.legendre {
                    let z = b + side * (mid + half * x);
                    let weight = w * half * norm * (-0.5 * z * z).exp();
                    let v = f(z)?;
                    for d in 0..D {
                        acc[d] += weight * v[d];
                    }
                }
            }
        }
        Ok(acc)
    }
}

/// Convenience wrapper building a rule of `nodes` points.
pub fn gauss_integral(f: impl Fn(f64) -> f64, nodes: usize) -> Result<f64> {
    if nodes == 0 {
        return Err(Error::InvalidParams("quadrature needs at least one node".into()));
    }
    Ok(GaussHermite::new(nodes).integrate(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::t_tilde;

    /// Adaptive Simpson on `[-a, a]` against the normal density.
    fn adaptive_oracle(f: &dyn Fn(f64) -> f64, a: f64) -> f64 {
        fn simpson(lo: f64, hi: f64, fl: f64, fm: f64, fh: f64) -> f64 {
            (hi - lo) / 6.0 * (fl + 4.0 * fm + fh)
        }
        fn recurse(g: &dyn Fn(f64) -> f64, lo: f64, hi: f64, fl: f64, fm: f64, fh: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let mid = 0.5 * (lo + hi);
            let lm = 0.5 * (lo + mid);
            let rm = 0.5 * (mid + hi);
            let (flm, frm) = (g(lm), g(rm));
            let left = simpson(lo, mid, fl, flm, fm);
            let right = simpson(mid, hi, fm, frm, fh);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            recurse(g, lo, mid, fl, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(g, mid, hi, fm, frm, fh, right, tol / 2.0, depth - 1)
        }
        let density = |z: f64| f(z) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let (fl, fm, fh) = (density(-a), density(0.0), density(a));
        let whole = simpson(-a, a, fl, fm, fh);
        recurse(&density, -a, a, fl, fm, fh, whole, 1e-13, 40)
    }

    #[test]
    fn moments_are_exact() {
        let rule = GaussHermite::default();
        assert!((rule.integrate(|_| 1.0) - 1.0).abs() < 1e-13);
        assert!((rule.integrate(|z| z * z) - 1.0).abs() < 1e-13);
        assert!(rule.integrate(|z| z).abs() < 1e-15);
        assert!((rule.integrate(|z| z.powi(4)) - 3.0).abs() < 1e-12);
        assert!((rule.integrate(|z| z.powi(8)) - 105.0).abs() < 1e-10);
    }

    #[test]
    fn small_rules() {
        let r1 = GaussHermite::new(1);
        assert_eq!(r1.nodes(), &[0.0]);
        assert!((r1.weights()[0] - 1.0).abs() < 1e-15);
        let r2 = GaussHermite::new(2);
        assert_eq!(r2.nodes().len(), 2);
        assert!((r2.nodes()[1] - 1.0).abs() < 1e-15);
        assert!((r2.weights()[0] - 0.5).abs() < 1e-15);
        let r3 = GaussHermite::new(3);
        assert!((r3.nodes()[2] - 3f64.sqrt()).abs() < 1e-14);
        assert!((r3.weights()[1] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn large_rule_is_finite_and_normalized() {
        let rule = GaussHermite::new(2001);
        assert!(rule.nodes().iter().all(|z| z.is_finite()));
        assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
        assert!((rule.integrate(|_| 1.0) - 1.0).abs() < 1e-12);
        assert!((rule.integrate(|z| z * z) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn potential_integrand_matches_adaptive_oracle() {
        let f = |z: f64| t_tilde(0.3 + 0.8 * z, 0.5);
        let gh = gauss_integral(f, DEFAULT_NODES).unwrap();
        let oracle = adaptive_oracle(&f, 14.0);
        assert!((gh - oracle).abs() < 1e-9, "{gh} vs {oracle}");
        let fine = gauss_integral(f, 10 * DEFAULT_NODES).unwrap();
        assert!((gh - fine).abs() < 1e-10 * fine.abs());
    }

    #[test]
    fn legendre_rule_is_exact_for_polynomials() {
        for n in [1, 4, 8, 17] {
            let rule = gauss_legendre(n);
            for deg in 0..2 * n {
                let got: f64 = rule.iter().map(|&(x, w)| w * x.powi(deg as i32)).sum();
                let want = if deg % 2 == 0 { 2.0 / (deg + 1) as f64 } else { 0.0 };
                assert!((got - want).abs() < 1e-13, "n={n} deg={deg}: {got}");
            }
        }
    }

    #[test]
    fn split_rule_handles_jumps_and_cusps() {
        let rule = GaussHermite::default();
        // P(z > b) from a step, and E|z - b|^{1/3}, against closed form and
        // the adaptive oracle.
        for b in [-2.3, -0.4, 0.0, 0.9, 3.1] {
            let [mass] = rule.try_integrate_at(b, |z| Ok([if z > b { 1.0 } else { 0.0 }])).unwrap();
            let want = 0.5 * libm::erfc(b / std::f64::consts::SQRT_2);
            assert!((mass - want).abs() < 1e-12, "b={b}: {mass} vs {want}");
            let g = |z: f64| (z - b).abs().cbrt();
            let [cusp] = rule.try_integrate_at(b, |z| Ok([g(z)])).unwrap();
            let oracle = adaptive_oracle(&g, 14.0);
            assert!((cusp - oracle).abs() < 1e-8, "b={b}: {cusp} vs {oracle}");
        }
        let [one, z2] = rule.try_integrate_at(20.0, |z| Ok([1.0, z * z])).unwrap();
        assert!((one - 1.0).abs() < 1e-13 && (z2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_nodes_rejected() {
        assert!(gauss_integral(|_| 1.0, 0).is_err());
    }
}
