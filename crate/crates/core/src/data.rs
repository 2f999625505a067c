//! Synthetic labeled/unlabeled datasets drawn from the two-cluster model.
//!
//! Every random quantity comes from its own ChaCha20 stream keyed by the same
//! seed, so the center, the labels and the noise of each block can be
//! regenerated independently and bit-exactly.

use std::io::Write;

use ndarray::{Array1, Array2};
use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Stream identifiers for [`stream_rng`].
pub mod streams {
    pub const CENTER: u64 = 0;
    pub const LABELED_LABELS: u64 = 1;
    pub const UNLABELED_LABELS: u64 = 2;
    pub const LABELED_NOISE: u64 = 3;
    pub const UNLABELED_NOISE: u64 = 4;
    pub const SOLVER_INIT: u64 = 5;
    pub const FRESH_SAMPLES: u64 = 6;
}

/// Deterministic generator for one named stream of a seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `M_l x N` labeled features.
    pub x_labeled: Array2<f64>,
    pub y_labeled: Vec<i8>,
    /// `M_u x N` unlabeled features.
    pub x_unlabeled: Array2<f64>,
    /// Labels of the unlabeled rows. Never read by the estimators.
    pub y_hidden: Vec<i8>,
    /// True cluster center.
    pub w0: Array1<f64>,
    pub seed: u64,
}

impl Dataset {
    pub fn n_dim(&self) -> usize {
        self.w0.len()
    }

    pub fn m_labeled(&self) -> usize {
        self.y_labeled.len()
    }

    pub fn m_unlabeled(&self) -> usize {
        self.x_unlabeled.nrows()
    }

    /// Sample ratios actually realized after rounding `alpha * N`.
    pub fn realized_alphas(&self) -> (f64, f64) {
        let n = self.n_dim() as f64;
        (self.m_labeled() as f64 / n, self.m_unlabeled() as f64 / n)
    }

    /// `Σ_μ y_μ x_μ`, the only way labeled data enter AMP.
    pub fn labeled_sum(&self) -> Array1<f64> {
        let mut sum = Array1::zeros(self.n_dim());
        for (row, &y) in self.x_labeled.outer_iter().zip(&self.y_labeled) {
            sum.scaled_add(f64::from(y), &row);
        }
        sum
    }

    /// Writes the dataset as `row_type,label,feature_0..feature_{N-1}`.
    ///
    /// Unlabeled rows carry an empty label unless `reveal_hidden` is set; the
    /// center row (`W0`) never has a label.
    pub fn write_csv<W: Write>(&self, mut out: W, reveal_hidden: bool) -> std::io::Result<()> {
        write!(out, "row_type,label")?;
        for j in 0..self.n_dim() {
            write!(out, ",feature_{j}")?;
        }
        writeln!(out)?;
        let write_row = |out: &mut W, tag: &str, label: Option<i8>, row: ndarray::ArrayView1<f64>| {
            write!(out, "{tag},")?;
            if let Some(l) = label {
                write!(out, "{l}")?;
            }
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)
        };
        for (row, &y) in self.x_labeled.outer_iter().zip(&self.y_labeled) {
            write_row(&mut out, "L", Some(y), row)?;
        }
        for (row, &y) in self.x_unlabeled.outer_iter().zip(&self.y_hidden) {
            write_row(&mut out, "U", reveal_hidden.then_some(y), row)?;
        }
        write_row(&mut out, "W0", None, self.w0.view())
    }
}

fn draw_labels(rng: &mut ChaCha20Rng, count: usize, rho: f64) -> Vec<i8> {
    // rho is validated to [0, 1] before we get here.
    let coin = Bernoulli::new(rho).expect("rho in [0, 1]");
    (0..count)
        .map(|_| if coin.sample(rng) { 1 } else { -1 })
        .collect()
}

fn draw_features(rng: &mut ChaCha20Rng, labels: &[i8], w0: &Array1<f64>, sigma: f64) -> Array2<f64> {
    let n = w0.len();
    let scale = 1.0 / (n as f64).sqrt();
    let mut x = Array2::zeros((labels.len(), n));
    for (mut row, &y) in x.outer_iter_mut().zip(labels) {
        let shift = f64::from(y) * scale;
        for (xj, &wj) in row.iter_mut().zip(w0) {
            let xi: f64 = rng.sample(StandardNormal);
            *xj = shift * wj + sigma * xi;
        }
    }
    x
}

/// Draws `w0 ~ N(0, I/lambda0)`, labels `y ~ ±1` with `P(+1) = rho`, and
/// features `x = y w0 / sqrt(N) + xi` with `xi ~ N(0, sigma2 I)`.
pub fn generate_dataset(params: &ModelParams, seed: u64) -> Result<Dataset> {
    params.validate()?;
    let n = params.n_dim;
    let m_l = params.m_labeled();
    let m_u = params.m_unlabeled();

    let mut rng = stream_rng(seed, streams::CENTER);
    let prior_sd = 1.0 / params.lambda0.sqrt();
    let w0: Array1<f64> = (0..n)
        .map(|_| prior_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let y_labeled = draw_labels(&mut stream_rng(seed, streams::LABELED_LABELS), m_l, params.rho);
    let y_hidden = draw_labels(&mut stream_rng(seed, streams::UNLABELED_LABELS), m_u, params.rho);

    let sigma = params.sigma2.sqrt();
    let x_labeled = draw_features(&mut stream_rng(seed, streams::LABELED_NOISE), &y_labeled, &w0, sigma);
    let x_unlabeled = draw_features(&mut stream_rng(seed, streams::UNLABELED_NOISE), &y_hidden, &w0, sigma);

    Ok(Dataset {
        x_labeled,
        y_labeled,
        x_unlabeled,
        y_hidden,
        w0,
        seed,
    })
}

/// `(1/N) Σ_j w0_j²`.
pub fn empirical_signal_variance(d: &Dataset) -> f64 {
    d.w0.dot(&d.w0) / d.n_dim() as f64
}

/// Builds a dataset from explicit parts, checking row lengths.
pub fn dataset_from_parts(
    x_labeled: Array2<f64>,
    y_labeled: Vec<i8>,
    x_unlabeled: Array2<f64>,
    y_hidden: Vec<i8>,
    w0: Array1<f64>,
) -> Result<Dataset> {
    let n = w0.len();
    if n == 0 {
        return Err(Error::InvalidParams("empty center vector".into()));
    }
    for cols in [x_labeled.ncols(), x_unlabeled.ncols()] {
        if cols != n && cols != 0 {
            return Err(Error::DimensionMismatch { expected: n, got: cols });
        }
    }
    if x_labeled.nrows() != y_labeled.len() {
        return Err(Error::DimensionMismatch {
            expected: x_labeled.nrows(),
            got: y_labeled.len(),
        });
    }
    let x_labeled = if x_labeled.nrows() == 0 { Array2::zeros((0, n)) } else { x_labeled };
    let x_unlabeled = if x_unlabeled.nrows() == 0 { Array2::zeros((0, n)) } else { x_unlabeled };
    let y_hidden = if y_hidden.is_empty() { vec![1; x_unlabeled.nrows()] } else { y_hidden };
    Ok(Dataset {
        x_labeled,
        y_labeled,
        x_unlabeled,
        y_hidden,
        w0,
        seed: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, alpha_l: f64, alpha_u: f64) -> ModelParams {
        ModelParams {
            n_dim: n,
            alpha_l,
            alpha_u,
            ..Default::default()
        }
    }

    #[test]
    fn rejects_invalid_params() {
        let mut p = params(10, 0.5, 0.5);
        p.rho = -0.1;
        assert!(generate_dataset(&p, 1).is_err());
        p.rho = 0.5;
        p.n_dim = 0;
        assert!(generate_dataset(&p, 1).is_err());
    }

    #[test]
    fn zero_noise_rows_are_scaled_center() {
        let mut p = params(4, 0.5, 0.0);
        p.sigma2 = 1e-300;
        let d = generate_dataset(&p, 11).unwrap();
        assert_eq!(d.m_labeled(), 2);
        for (row, &y) in d.x_labeled.outer_iter().zip(&d.y_labeled) {
            for (x, w) in row.iter().zip(&d.w0) {
                assert!((x - f64::from(y) * w / 2.0).abs() < 1e-140);
            }
        }
    }

    #[test]
    fn rho_one_gives_positive_labels() {
        let mut p = params(100, 0.5, 0.3);
        p.rho = 1.0;
        let d = generate_dataset(&p, 5).unwrap();
        assert_eq!(d.m_labeled(), 50);
        assert!(d.y_labeled.iter().all(|&y| y == 1));
        assert!(d.y_hidden.iter().all(|&y| y == 1));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let p = params(30, 1.0, 2.0);
        assert_eq!(generate_dataset(&p, 9).unwrap(), generate_dataset(&p, 9).unwrap());
        assert_ne!(generate_dataset(&p, 9).unwrap().w0, generate_dataset(&p, 10).unwrap().w0);
    }

    #[test]
    fn label_balance_and_signal_variance() {
        let p = params(8000, 0.5, 0.0);
        let d = generate_dataset(&p, 7).unwrap();
        let m = d.m_labeled() as f64;
        let mean: f64 = d.y_labeled.iter().map(|&y| f64::from(y)).sum::<f64>() / m;
        assert!(mean.abs() < 3.0 / m.sqrt(), "label mean {mean}");
        assert!((empirical_signal_variance(&d) - 1.0).abs() < 0.05);

        // Independently seeded regeneration of the center stream.
        let mut rng = stream_rng(7, streams::CENTER);
        let w: Vec<f64> = (0..8000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        assert_eq!(w[..5], d.w0.as_slice().unwrap()[..5]);
    }

    #[test]
    fn signal_variance_examples() {
        let zeros = dataset_from_parts(
            Array2::zeros((0, 3)),
            vec![],
            Array2::zeros((0, 3)),
            vec![],
            Array1::zeros(3),
        )
        .unwrap();
        assert_eq!(empirical_signal_variance(&zeros), 0.0);
        let ones = dataset_from_parts(
            Array2::zeros((0, 7)),
            vec![],
            Array2::zeros((0, 7)),
            vec![],
            Array1::ones(7),
        )
        .unwrap();
        assert_eq!(empirical_signal_variance(&ones), 1.0);

        let p = ModelParams {
            lambda0: 4.0,
            ..params(8000, 0.0, 0.0)
        };
        let d = generate_dataset(&p, 3).unwrap();
        assert!((empirical_signal_variance(&d) - 0.25).abs() < 0.02);
    }

    #[test]
    fn class_conditional_moments() {
        let p = params(20, 0.0, 100.0);
        let d = generate_dataset(&p, 21).unwrap();
        let n = d.n_dim();
        let scale = 1.0 / (n as f64).sqrt();
        for class in [1i8, -1] {
            let rows: Vec<_> = d
                .x_unlabeled
                .outer_iter()
                .zip(&d.y_hidden)
                .filter(|(_, &y)| y == class)
                .map(|(r, _)| r.to_owned())
                .collect();
            let m = rows.len() as f64;
            assert!(m > 500.0);
            let mut mean = Array1::<f64>::zeros(n);
            for r in &rows {
                mean += r;
            }
            mean /= m;
            let expect = d.w0.mapv(|w| f64::from(class) * w * scale);
            for j in 0..n {
                assert!((mean[j] - expect[j]).abs() < 5.0 / m.sqrt());
            }
            // covariance ≈ sigma2 * I
            for a in 0..n {
                for b in 0..n {
                    let c: f64 = rows
                        .iter()
                        .map(|r| (r[a] - mean[a]) * (r[b] - mean[b]))
                        .sum::<f64>()
                        / m;
                    // sample variance has sd sqrt(2/m), covariances 1/sqrt(m)
                    let (target, sd) = if a == b { (1.0, (2.0 / m).sqrt()) } else { (0.0, 1.0 / m.sqrt()) };
                    assert!((c - target).abs() < 5.0 * sd, "cov[{a},{b}] = {c}");
                }
            }
        }
    }

    #[test]
    fn csv_hides_labels_unless_revealed() {
        let p = params(3, 1.0, 1.0);
        let d = generate_dataset(&p, 2).unwrap();
        let mut hidden = Vec::new();
        d.write_csv(&mut hidden, false).unwrap();
        let text = String::from_utf8(hidden).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "row_type,label,feature_0,feature_1,feature_2");
        assert_eq!(lines.len(), 1 + 3 + 3 + 1);
        assert!(lines[4].starts_with("U,,"));
        assert!(lines[7].starts_with("W0,,"));
        let mut shown = Vec::new();
        d.write_csv(&mut shown, true).unwrap();
        let text = String::from_utf8(shown).unwrap();
        let u_line = text.lines().nth(4).unwrap();
        assert!(u_line.starts_with("U,1,") || u_line.starts_with("U,-1,"));
    }
}
