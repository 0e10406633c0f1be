// Sequential vs rayon execution of the hot loops. `cargo bench` compares both
// modes inside one build; `cargo bench --no-default-features` measures the
// whole pipeline without rayon.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use rkme::herding::{herd_sample, HerdOptions};
use rkme::kernel::gram_with;
use rkme::par::Execution;
use rkme::rkme::{inner_with, reduce, self_inner_with, Embedding, ReduceOptions};
use rkme::{KernelConfig, Points};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn points(n: usize, d: usize, seed: u64) -> Points {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Points::new((0..n * d).map(|_| rng.sample(StandardNormal)).collect(), d).unwrap()
}

fn gram(c: &mut Criterion) {
    let cfg = KernelConfig::gaussian(0.5).unwrap();
    let mut group = c.benchmark_group("gram");
    for n in [100, 400, 1600] {
        let a = points(n, 8, 1);
        group.throughput(Throughput::Elements((n * n) as u64));
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &a, |b, a| {
                b.iter(|| black_box(gram_with(&cfg, a, a, exec).unwrap()))
            });
        }
    }
    group.finish();
}

fn mmd(c: &mut Criterion) {
    let cfg = KernelConfig::gaussian(0.5).unwrap();
    let mut group = c.benchmark_group("mmd");
    for n in [200, 1000, 4000] {
        let (x, y) = (points(n, 4, 2), points(n, 4, 3));
        group.throughput(Throughput::Elements((n * n) as u64));
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &(&x, &y), |b, (x, y)| {
                b.iter(|| {
                    let (ex, ey) = (Embedding::uniform(x), Embedding::uniform(y));
                    black_box(
                        self_inner_with(&cfg, ex, exec) + self_inner_with(&cfg, ey, exec)
                            - 2.0 * inner_with(&cfg, ex, ey, exec).unwrap(),
                    )
                })
            });
        }
    }
    group.finish();
}

fn pipeline(c: &mut Criterion) {
    let cfg = KernelConfig::gaussian(1.0).unwrap();
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    for n in [300, 1200] {
        let x = points(n, 2, 4);
        group.bench_with_input(BenchmarkId::new("reduce_m10", n), &x, |b, x| {
            b.iter(|| black_box(reduce(&cfg, x, 10, &ReduceOptions::default()).unwrap()))
        });
    }
    let spec = reduce(&cfg, &points(300, 2, 5), 10, &ReduceOptions::default()).unwrap();
    for t in [50, 200] {
        group.bench_with_input(BenchmarkId::new("herd", t), &t, |b, &t| {
            b.iter(|| black_box(herd_sample(&spec, t, &HerdOptions::default()).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, gram, mmd, pipeline);
criterion_main!(benches);
