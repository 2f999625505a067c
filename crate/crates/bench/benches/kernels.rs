use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ssl_gmm_core::{
    f_rmle, generate_dataset, run_amp, se_fixed_point, se_step, t_rmle, AmpInit, AmpOptions, Estimator, GaussHermite,
    ModelParams, OrderParams, SeOptions,
};

fn scalar_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("rmle_kernel");
    // Below t = 1 the maximizer is unique; above it two maxima compete.
    for t in [0.5, 0.99, 2.5] {
        g.bench_with_input(BenchmarkId::new("f", t), &t, |b, &t| {
            b.iter(|| f_rmle(black_box(0.37), t, 0.4).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("t", t), &t, |b, &t| {
            b.iter(|| t_rmle(black_box(-0.12), t, 0.5).unwrap())
        });
    }
    g.finish();
}

fn state_evolution(c: &mut Criterion) {
    let rule = GaussHermite::default();
    let mut g = c.benchmark_group("state_evolution");
    for est in [Estimator::Rmle, Estimator::Bayes] {
        let p = ModelParams {
            alpha_l: 0.5,
            alpha_u: 2.5,
            estimator: est,
            ..Default::default()
        };
        let op = OrderParams::new(0.6, 0.8, 0.4, p.lambda0);
        g.bench_function(BenchmarkId::new("step", est.as_str()), |b| {
            b.iter(|| se_step(black_box(&op), &p, 0.6, &rule).unwrap())
        });
        g.bench_function(BenchmarkId::new("fixed_point", est.as_str()), |b| {
            b.iter(|| se_fixed_point(&p, black_box(0.6), OrderParams::informed(0.6, 1.0), &SeOptions::default(), &rule).unwrap())
        });
    }
    g.finish();
}

fn amp_sweeps(c: &mut Criterion) {
    let mut g = c.benchmark_group("amp");
    g.sample_size(10);
    // A fixed budget of ten sweeps; eps is small enough never to stop early.
    let opts = AmpOptions { eps: 1e-300, max_iter: 10 };
    for n in [500usize, 2000] {
        let p = ModelParams {
            alpha_l: 0.5,
            alpha_u: 2.5,
            n_dim: n,
            ..Default::default()
        };
        let d = generate_dataset(&p, 1).unwrap();
        g.bench_with_input(BenchmarkId::new("ten_sweeps", n), &n, |b, _| {
            b.iter(|| run_amp(&d, &p, 0.3, AmpInit::Supervised, &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, scalar_kernels, state_evolution, amp_sweeps);
criterion_main!(benches);
