use capax_bench::{cloud, gaussian};
use capax_core::capacity::{capacity, dyadic_ladder, CompactSetGrid, SolverConfig};
use capax_core::extension::{dirichlet_to_neumann, extend};
use capax_core::fracspaces::{frac_perimeter, IndicatorGenerator, IndicatorSet};
use capax_core::grid::{convolve, TLadder};
use capax_core::kernel::poisson_kernel;
use capax_core::wolff::wolff_at_atoms;
use capax_core::{GridFunction, GridSpec, KernelParams};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn bench_kernel(c: &mut Criterion) {
    let p = KernelParams::new(2, 0.7).unwrap();
    c.bench_function("poisson_kernel 2d", |b| {
        b.iter(|| poisson_kernel(&p, black_box(&[0.3, -1.2]), black_box(0.8)).unwrap())
    });
}

fn bench_convolve(c: &mut Criterion) {
    let mut group = c.benchmark_group("convolve");
    let p = KernelParams::new(1, 1.0).unwrap();
    for m in [256usize, 1024, 4096] {
        let spec = GridSpec::new(1, 8.0, m).unwrap();
        let f = gaussian(spec);
        let k = GridFunction::from_fn(spec, |x| poisson_kernel(&p, x, 0.5).unwrap());
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| b.iter(|| convolve(&f, &k).unwrap()));
    }
    group.finish();
}

fn bench_extension(c: &mut Criterion) {
    let spec = GridSpec::new(1, 8.0, 256).unwrap();
    let f = gaussian(spec);
    let p = KernelParams::new(1, 0.8).unwrap();
    let ladder = TLadder::for_grid(&spec, 32).unwrap();
    c.bench_function("extend m=256 k=32", |b| b.iter(|| extend(&f, &ladder, &p).unwrap()));
    c.bench_function("dirichlet_to_neumann m=256", |b| b.iter(|| dirichlet_to_neumann(&f, &p).unwrap()));
}

fn bench_capacity(c: &mut Criterion) {
    let spec = GridSpec::new(1, 4.0, 64).unwrap();
    let ladder = dyadic_ladder(0.0625, 8.0, 8).unwrap();
    let p = KernelParams::new(1, 1.0).unwrap();
    let set = CompactSetGrid::box_set(spec, ladder, 1.0, [0.0; 2], 0.0).unwrap();
    let cfg = SolverConfig::default();
    let mut group = c.benchmark_group("capacity");
    group.sample_size(10);
    group.bench_function("box p=2", |b| b.iter(|| capacity(&set, 2.0, &p, &cfg).unwrap()));
    group.finish();
}

fn bench_wolff(c: &mut Criterion) {
    let mut group = c.benchmark_group("wolff_at_atoms");
    for n in [50usize, 200] {
        let mu = cloud(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| wolff_at_atoms(&mu, 2.0).unwrap()));
    }
    group.finish();
}

fn bench_perimeter(c: &mut Criterion) {
    let spec = GridSpec::new(2, 2.0, 32).unwrap();
    let e = IndicatorSet::from_generator(spec, IndicatorGenerator::Disc { center: [0.0, 0.0], r: 1.0 }).unwrap();
    c.bench_function("frac_perimeter disc 32x32", |b| b.iter(|| frac_perimeter(&e, 0.5).unwrap()));
}

criterion_group!(
    benches,
    bench_kernel,
    bench_convolve,
    bench_extension,
    bench_capacity,
    bench_wolff,
    bench_perimeter
);
criterion_main!(benches);
