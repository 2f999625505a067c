//! Generative and estimation parameters shared by every solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which member of the β-posterior family is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// ℓ2-regularized maximum likelihood (β → ∞).
    Rmle,
    /// Posterior mean (β = 1).
    Bayes,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Rmle => "rmle",
            Estimator::Bayes => "bayes",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rmle" => Ok(Estimator::Rmle),
            "bayes" | "bo" => Ok(Estimator::Bayes),
            other => Err(Error::InvalidParams(format!("unknown estimator '{other}'"))),
        }
    }
}

/// All scalars of the two-cluster model and of the estimator applied to it.
///
/// `sigma2` is the noise variance assumed by the estimator; data are generated
/// with the same value. Running with a mismatched generator variance is not
/// supported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    /// Probability that a label is +1.
    pub rho: f64,
    /// Precision of the true center prior.
    pub lambda0: f64,
    /// Regularization strength (assumed prior precision).
    pub lambda: f64,
    /// Noise variance.
    pub sigma2: f64,
    /// Labeled samples per dimension.
    pub alpha_l: f64,
    /// Unlabeled samples per dimension.
    pub alpha_u: f64,
    /// Dimension of the feature space.
    pub n_dim: usize,
    pub estimator: Estimator,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            rho: 0.5,
            lambda0: 1.0,
            lambda: 1.0,
            sigma2: 1.0,
            alpha_l: 0.0,
            alpha_u: 1.0,
            n_dim: 1000,
            estimator: Estimator::Rmle,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidParams(format!(
                "rho must lie in [0, 1], got {}",
                self.rho
            )));
        }
        for (name, value) in [
            ("lambda0", self.lambda0),
            ("lambda", self.lambda),
            ("sigma2", self.sigma2),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        for (name, value) in [("alpha_l", self.alpha_l), ("alpha_u", self.alpha_u)] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be non-negative, got {value}"
                )));
            }
        }
        if self.n_dim == 0 {
            return Err(Error::InvalidParams("n_dim must be positive".into()));
        }
        Ok(())
    }

    /// Total sample ratio `alpha_l + alpha_u`.
    pub fn alpha(&self) -> f64 {
        self.alpha_l + self.alpha_u
    }

    /// Signal-to-noise ratio `1 / (lambda0 * sigma2)`.
    pub fn snr(&self) -> f64 {
        1.0 / (self.lambda0 * self.sigma2)
    }

    /// Number of labeled rows for the configured dimension.
    pub fn m_labeled(&self) -> usize {
        (self.alpha_l * self.n_dim as f64).round() as usize
    }

    /// Number of unlabeled rows for the configured dimension.
    pub fn m_unlabeled(&self) -> usize {
        (self.alpha_u * self.n_dim as f64).round() as usize
    }

    /// Decision offset `(sigma2 / 2) ln(rho / (1 - rho))`.
    pub fn decision_offset(&self) -> f64 {
        0.5 * self.sigma2 * (self.rho / (1.0 - self.rho)).ln()
    }

    /// `(0, 0)` is a fixed point of state evolution only when neither labels
    /// nor class imbalance break the ±w0 symmetry.
    pub fn has_trivial_fixed_point(&self) -> bool {
        self.alpha_l == 0.0 && (self.rho == 0.5 || self.alpha_u == 0.0)
    }

    pub fn with_estimator(mut self, estimator: Estimator) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_alpha_u(mut self, alpha_u: f64) -> Self {
        self.alpha_u = alpha_u;
        self
    }
}
