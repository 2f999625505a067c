use proptest::prelude::*;
use ssl_gmm_core::{
    chi_from_lambda, generate_dataset, lambda_from_chi, run_amp, se_fixed_point, AmpInit, AmpOptions, Branch,
    Estimator, GaussHermite, ModelParams, OrderParams, SeOptions,
};

fn params(est: Estimator) -> ModelParams {
    ModelParams {
        rho: 0.4,
        alpha_l: 0.5,
        alpha_u: 2.0,
        n_dim: 120,
        estimator: est,
        ..Default::default()
    }
}

#[test]
fn datasets_are_reproducible_and_shaped() {
    let p = params(Estimator::Rmle);
    let a = generate_dataset(&p, 11).unwrap();
    let b = generate_dataset(&p, 11).unwrap();
    let c = generate_dataset(&p, 12).unwrap();
    assert_eq!(a.x_unlabeled, b.x_unlabeled);
    assert_eq!(a.w0, b.w0);
    assert_ne!(a.w0, c.w0);
    assert_eq!(a.x_labeled.dim(), (60, 120));
    assert_eq!(a.x_unlabeled.dim(), (240, 120));
    assert_eq!(a.y_hidden.len(), 240);
}

#[test]
fn amp_never_reads_hidden_labels() {
    let p = params(Estimator::Bayes);
    let d = generate_dataset(&p, 5).unwrap();
    let mut scrambled = d.clone();
    scrambled.y_hidden.iter_mut().for_each(|y| *y = -*y);
    let opts = AmpOptions { eps: 1e-10, max_iter: 200 };
    let a = run_amp(&d, &p, 0.4, AmpInit::Supervised, &opts).unwrap();
    let b = run_amp(&scrambled, &p, 0.4, AmpInit::Supervised, &opts).unwrap();
    assert_eq!(a.w_hat, b.w_hat);
}

/// At `λ = λ0` the Bayes estimate is the posterior mean, so its overlap with
/// the truth equals its own norm: `k/λ0 = k²/λ0 + v`.
#[test]
fn bayes_optimal_fixed_point_satisfies_nishimori_identity() {
    let rule = GaussHermite::default();
    let opts = SeOptions { eps: 1e-12, ..Default::default() };
    for (au, rho, al) in [(0.5, 0.5, 0.2), (2.0, 0.4, 0.5), (5.0, 0.3, 0.0), (8.0, 0.5, 0.1)] {
        let p = ModelParams {
            rho,
            alpha_l: al,
            alpha_u: au,
            lambda0: 1.5,
            estimator: Estimator::Bayes,
            ..Default::default()
        };
        let p = p.with_lambda(p.lambda0);
        let chi = chi_from_lambda(&p, p.lambda0, Branch::Informed, &opts, &rule).unwrap();
        let fp = se_fixed_point(&p, chi, OrderParams::informed(chi, p.lambda0), &opts, &rule).unwrap();
        let (k, v) = (fp.op.k, fp.op.v);
        assert!(fp.converged);
        assert!((k * (1.0 - k) / p.lambda0 - v).abs() < 1e-7, "alpha_u={au}: k={k} v={v}");
    }
}

#[test]
fn lambda_chi_round_trip() {
    let rule = GaussHermite::default();
    let opts = SeOptions::default();
    for est in [Estimator::Rmle, Estimator::Bayes] {
        let p = params(est);
        for lambda in [0.7, 1.3, 3.0] {
            let chi = chi_from_lambda(&p, lambda, Branch::Informed, &opts, &rule).unwrap();
            let fp = se_fixed_point(&p, chi, OrderParams::informed(chi, p.lambda0), &opts, &rule).unwrap();
            let back = lambda_from_chi(&p, chi, &fp.op, &rule).unwrap();
            assert!((back - lambda).abs() < 1e-5 * lambda, "{}: {lambda} -> {chi} -> {back}", est.as_str());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Splitting the rule anywhere leaves smooth expectations unchanged.
    #[test]
    fn split_rule_reproduces_normal_moments(b in -12.0f64..12.0) {
        let rule = GaussHermite::default();
        let [m0, m1, m2, m4] = rule.try_integrate_at(b, |z| Ok([1.0, z, z * z, z.powi(4)])).unwrap();
        // Panels of eight Legendre points carry errors near 1e-10 on z^4.
        prop_assert!((m0 - 1.0).abs() < 5e-12);
        prop_assert!(m1.abs() < 2e-11);
        prop_assert!((m2 - 1.0).abs() < 5e-11);
        prop_assert!((m4 - 3.0).abs() < 5e-10);
    }

    #[test]
    fn se_step_keeps_variance_nonnegative(k in 0.0f64..3.0, v in 0.0f64..3.0, chi in 0.05f64..0.95, rho in 0.05f64..0.95) {
        let rule = GaussHermite::new(61);
        for est in [Estimator::Rmle, Estimator::Bayes] {
            let p = ModelParams { rho, alpha_u: 1.5, estimator: est, ..Default::default() };
            let next = ssl_gmm_core::se_step(&OrderParams::new(chi, k, v, 1.0), &p, chi, &rule).unwrap();
            prop_assert!(next.v >= 0.0 && next.k.is_finite());
            // |F| <= 1 bounds the second moment.
            prop_assert!(next.v <= chi * chi * (p.alpha_l + p.alpha_u) / p.sigma2 + 1e-12);
        }
    }
}
