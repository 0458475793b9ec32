use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use shelab_core::kernels::{heat_kernel, KernelQuery};
use shelab_core::moment::solve_second_moment;
use shelab_core::simulate::run_ensemble;
use shelab_core::{DomainSpec, InitialCondition, MomentProblem, NoiseSpec, SigmaSpec, SimConfig};

fn kernel(c: &mut Criterion) {
    let mut group = c.benchmark_group("heat_kernel");
    for d in [DomainSpec::dirichlet(PI).unwrap(), DomainSpec::neumann(PI).unwrap()] {
        // one time on each side of the image/spectral crossover
        for t in [0.05, 2.0] {
            let q = KernelQuery::new(t, 1.0, 2.0);
            group.bench_with_input(BenchmarkId::new(d.boundary.as_str(), t), &q, |b, q| {
                b.iter(|| heat_kernel(black_box(q), &d).unwrap())
            });
        }
    }
    group.finish();
}

fn volterra(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_second_moment");
    group.sample_size(20);
    for n in [16, 32, 64] {
        let p = MomentProblem::new(DomainSpec::dirichlet(PI).unwrap(), 1.0, 5.0, n, 0.01);
        group.bench_with_input(BenchmarkId::from_parameter(n), &p, |b, p| {
            b.iter(|| solve_second_moment(black_box(p)).unwrap())
        });
    }
    group.finish();
}

fn ensemble(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_ensemble");
    group.sample_size(10);
    let n = 32;
    let h = PI / n as f64;
    let cfg = SimConfig {
        domain: DomainSpec::dirichlet(PI).unwrap(),
        sigma: SigmaSpec::linear(),
        noise: NoiseSpec::White,
        lambda: 1.0,
        u0: InitialCondition::default(),
        nodes: n,
        step: 0.1 / (0.1 / (0.25 * h * h)).ceil(),
        horizon: 0.1,
        snapshots: vec![0.05, 0.1],
        master_seed: 1,
        moments: vec![2],
    };
    for paths in [64u64, 256] {
        group.bench_with_input(BenchmarkId::from_parameter(paths), &paths, |b, &paths| {
            b.iter(|| run_ensemble(black_box(&cfg), paths).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kernel, volterra, ensemble);
criterion_main!(benches);
