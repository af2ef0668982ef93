use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mecwpt::numerics::{hermitian_eig_desc, lambert_w0, solve_lp, LpProblem};
use mecwpt::{outer_descent, realize, solve_pwc, CMatrix, ChargeOptions, OffloadOptions, SystemParams, UserRequest};

fn lambert(c: &mut Criterion) {
    let xs: Vec<f64> = (0..64).map(|i| -0.36 + 1.5f64.powi(i / 2)).collect();
    c.bench_function("lambert_w0/64", |b| {
        b.iter(|| xs.iter().map(|&x| lambert_w0(black_box(x)).unwrap()).sum::<f64>())
    });
}

fn lp(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_lp");
    for k in [2usize, 4, 8] {
        let prob = LpProblem {
            objective: (0..k).map(|j| 1.0 + 0.1 * j as f64).collect(),
            constraints: (0..k)
                .map(|i| (0..k).map(|j| 1.0 / (1.0 + (i + 2 * j) as f64)).collect())
                .collect(),
            bounds: (0..k).map(|i| 0.5 + 0.05 * i as f64).collect(),
            sum_bound: Some(1.0),
            descending: false,
        };
        g.bench_with_input(BenchmarkId::from_parameter(k), &prob, |b, p| {
            b.iter(|| solve_lp(black_box(p)).unwrap())
        });
    }
    g.finish();
}

fn eigen(c: &mut Criterion) {
    let n = 32;
    let a = CMatrix::from_fn(n, n, |i, j| {
        let d = i.abs_diff(j) as f64;
        mecwpt::Complex64::new(1.0 / (1.0 + d), if i < j { 0.1 } else if i > j { -0.1 } else { 0.0 })
    });
    c.bench_function("hermitian_eig_desc/32", |b| b.iter(|| hermitian_eig_desc(black_box(&a)).unwrap()));
}

fn charging(c: &mut Criterion) {
    let p = SystemParams::paper_defaults();
    let (_, chans) = realize(&p, 7).unwrap();
    let h = chans.cell_channels(0);
    let reqs = UserRequest::uniform(h.len(), 0.0, 0.05);
    let opts = ChargeOptions::default();
    c.bench_function("solve_pwc/defaults", |b| {
        b.iter(|| solve_pwc(black_box(&h), &reqs, 0.01, &p, &opts).unwrap())
    });
}

fn offloading(c: &mut Criterion) {
    let p = SystemParams::paper_defaults();
    let (_, chans) = realize(&p, 7).unwrap();
    let links = chans.cell_links(0);
    let reqs = UserRequest::uniform(links.len(), 2e4, 0.0);
    let opts = OffloadOptions::default();
    let mut g = c.benchmark_group("outer_descent");
    g.sample_size(10);
    g.bench_function("20kbit", |b| b.iter(|| outer_descent(black_box(&links), &reqs, &p, &opts).unwrap()));
    g.finish();
}

criterion_group!(benches, lambert, lp, eigen, charging, offloading);
criterion_main!(benches);
