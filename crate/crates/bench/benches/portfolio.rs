use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use impactkit::portfolio::{build_frontier, c_bounds, optimal_portfolio, utility_loss};
use impactkit::{gen_market, UNLIMITED_LEVERAGE};

fn frontier(c: &mut Criterion) {
    let spec = gen_market(5, 2024).unwrap();
    let mut group = c.benchmark_group("frontier/k=5");
    group.sample_size(10);
    for l1 in [2.0, UNLIMITED_LEVERAGE] {
        group.bench_with_input(BenchmarkId::new("c_bounds", l1), &l1, |b, &l1| {
            b.iter(|| c_bounds(black_box(&spec), l1).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("20_points", l1), &l1, |b, &l1| {
            b.iter(|| build_frontier(black_box(&spec), l1, 20).unwrap())
        });
    }
    group.finish();
}

fn utility(c: &mut Criterion) {
    let spec = gen_market(5, 2024).unwrap();
    let perturbed = spec
        .thetas
        .iter()
        .map(|t| impactkit::ImpactParams::new(1.2 * t.gamma, 0.8 * t.eta, t.alpha, t.beta))
        .collect::<Vec<_>>();
    let mut group = c.benchmark_group("utility/k=5");
    for lambda in [0.25, 4.0] {
        group.bench_with_input(BenchmarkId::new("optimal", lambda), &lambda, |b, &l| {
            b.iter(|| optimal_portfolio(l, 0.0, black_box(&spec), 2.0).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("loss", lambda), &lambda, |b, &l| {
            b.iter(|| utility_loss(black_box(&perturbed), &spec, l, 0.0, 2.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, frontier, utility);
criterion_main!(benches);
