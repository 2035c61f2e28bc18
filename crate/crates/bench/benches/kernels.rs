use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use cgc_bench::fixture;
use cgc_core::io::{parse_frostt, write_frostt};
use cgc_core::kernels::mttkrp_masked;
use cgc_core::metrics::fms;
use cgc_core::objective::{poisson_nll, stochastic_nll_estimate};
use cgc_core::sampling::sample_stratified;
use cgc_core::{cpapr_mu, gcp_adam, CpaprOptions, GcpOptions, Seed};

fn objective(c: &mut Criterion) {
    let (x, m) = fixture(&[50, 50, 50], 5, 0.01);
    c.bench_function("poisson_nll 50^3", |b| b.iter(|| poisson_nll(black_box(&x), &m, 1e-10).unwrap()));
    let values = vec![1.0; x.nnz()];
    c.bench_function("mttkrp 50^3 mode 1", |b| b.iter(|| mttkrp_masked(&x, &m, 1, black_box(&values)).unwrap()));
    let mut rng = Seed(1).rng();
    c.bench_function("sample_stratified 1000+1000", |b| {
        b.iter(|| sample_stratified(&x, 1000, 1000, &mut rng).unwrap())
    });
    let s = sample_stratified(&x, 1000, 1000, &mut rng).unwrap();
    c.bench_function("nll estimate 2000 samples", |b| b.iter(|| stochastic_nll_estimate(&m, black_box(&s), 1e-10).unwrap()));
}

fn solvers(c: &mut Criterion) {
    let (x, m) = fixture(&[50, 50, 50], 5, 0.01);
    let mut group = c.benchmark_group("solvers 50^3 rank 5");
    group.sample_size(10);
    let cp = CpaprOptions::default().with_budget(10);
    group.bench_function("cpapr 10 iterations", |b| b.iter(|| cpapr_mu(&x, 5, &m, &cp).unwrap()));
    let gcp = GcpOptions { alpha_final: 1e-300, ..GcpOptions::default() }.with_budget(1);
    group.bench_function("gcp 1 epoch", |b| b.iter(|| gcp_adam(&x, 5, &m, &gcp, &mut Seed(3).rng()).unwrap()));
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("fms");
    for rank in [5, 20, 100] {
        let (_, a) = fixture(&[30, 30, 30], rank, 0.05);
        let (_, b) = fixture(&[30, 30, 30], rank, 0.05);
        let b = b.scale_weights(2.0);
        group.bench_with_input(BenchmarkId::from_parameter(rank), &rank, |bench, _| bench.iter(|| fms(&a, &b).unwrap()));
    }
    group.finish();
}

fn frostt(c: &mut Criterion) {
    let (x, _) = fixture(&[100, 100, 100], 5, 0.1);
    let mut text = Vec::new();
    write_frostt(&x, &mut text).unwrap();
    let mut group = c.benchmark_group("frostt");
    group.sample_size(10);
    group.throughput(criterion::Throughput::Elements(x.nnz() as u64));
    group.bench_function("parse", |b| b.iter(|| parse_frostt(black_box(text.as_slice())).unwrap()));
    group.finish();
}

criterion_group!(benches, objective, solvers, metrics, frostt);
criterion_main!(benches);
