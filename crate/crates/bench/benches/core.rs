use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use gopctl_bench::{curve_pair, latent_fixture, mock_fixture};
use gopctl_core::dvmp::decide_mask;
use gopctl_core::entropy::{decode_tensor, encode_tensor};
use gopctl_core::eval::{bd_rate_with, BdFit};
use gopctl_core::search::{dfs_optimal, dfs_optimal_parallel, greedy, memoized_dfs};
use gopctl_core::{bd_rate, Dims, MaskPolicy, MockBackend};

fn entropy(c: &mut Criterion) {
    let mut g = c.benchmark_group("entropy");
    for dims in [Dims::new(32, 16, 16), Dims::new(128, 16, 16)] {
        let (latent, prior) = latent_fixture(dims, 1);
        let policy = MaskPolicy::scale_threshold(0.3);
        let mask = decide_mask(&prior, None, &policy).unwrap();
        let stream = encode_tensor(&latent, &prior, &mask).unwrap();
        g.throughput(Throughput::Elements(dims.len() as u64));
        g.bench_with_input(BenchmarkId::new("encode", dims), &dims, |b, _| {
            b.iter(|| encode_tensor(black_box(&latent), &prior, &mask).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("decode", dims), &dims, |b, _| {
            b.iter(|| decode_tensor(black_box(&stream), &prior, Some(&mask)).unwrap())
        });
    }
    g.finish();
}

fn search(c: &mut Criterion) {
    let mut g = c.benchmark_group("search");
    let backend = MockBackend::new(mock_fixture(16, 2));
    for n in [10usize, 14] {
        g.bench_with_input(BenchmarkId::new("dfs", n), &n, |b, &n| {
            b.iter(|| dfs_optimal(&backend, n, black_box(0.5)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("dfs_parallel_4", n), &n, |b, &n| {
            b.iter(|| dfs_optimal_parallel(&backend, n, black_box(0.5), 4).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("memoized", n), &n, |b, &n| {
            b.iter(|| memoized_dfs(&backend, n, black_box(0.5)).unwrap())
        });
    }
    g.bench_function("greedy/16", |b| b.iter(|| greedy(&backend, 16, black_box(0.5)).unwrap()));
    g.finish();
}

fn bdrate(c: &mut Criterion) {
    let (anchor, test) = curve_pair();
    c.bench_function("bd_rate/pchip", |b| b.iter(|| bd_rate(black_box(&anchor), &test).unwrap()));
    c.bench_function("bd_rate/cubic", |b| {
        b.iter(|| bd_rate_with(black_box(&anchor), &test, BdFit::Cubic).unwrap())
    });
}

criterion_group!(benches, entropy, search, bdrate);
criterion_main!(benches);
