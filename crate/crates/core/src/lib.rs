//! Approximate message passing, state evolution and phase analysis for
//! semi-supervised classification of a symmetric two-cluster Gaussian mixture.
//!
//! Two estimators of the cluster center are covered: ℓ2-regularized maximum
//! likelihood ([`Estimator::Rmle`]) and the posterior mean
//! ([`Estimator::Bayes`]). Both can be run on concrete data ([`amp`]) or
//! tracked in the large-dimension limit ([`state_evolution`]).

pub mod abp;
pub mod amp;
pub mod data;
pub mod error;
pub mod gd;
pub mod lambda_chi;
pub mod metrics;
pub mod params;
pub mod phase;
pub mod potentials;
pub mod quadrature;
pub mod roots;
pub mod scaling;
pub mod state_evolution;
pub mod tuning;

pub use abp::{run_abp, AbpState};
pub use amp::{order_params_from_state, run_amp, AmpInit, AmpOptions, AmpState};
pub use data::{empirical_signal_variance, generate_dataset, Dataset};
pub use error::{Error, Result};
pub use gd::{delta_gd_amp, objective_and_gradient, run_gd, GdConfig, GdOutcome};
pub use lambda_chi::{chi_from_lambda, Branch, LambdaChiTable};
pub use metrics::{ge_from_order_params, mse_from_order_params, predict_label, ErrorReport};
pub use params::{Estimator, ModelParams};
pub use phase::{classify_phase, Phase, PhaseReport};
pub use potentials::{f_rmle, f_tilde, gaussian_tail_q, solve_y_star, t_rmle, t_tilde, PotentialEval};
pub use quadrature::{gauss_integral, GaussHermite};
pub use scaling::{bootstrap_delta0, fit_power_law, ScalingFit};
pub use state_evolution::{lambda_from_chi, se_fixed_point, se_step, OrderParams, SeOptions};
pub use tuning::{search_optimal_lambda, Metric, OptimalLambda, TuningOptions};
