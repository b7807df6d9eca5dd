use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lpgeo_bench::{sampled_spike_field, spike_field, SEED};
use lpgeo_core::{sample_pairs, Solver, SolverConfig};

fn pair_queries(c: &mut Criterion) {
    let mut group = c.benchmark_group("pair_distance");
    group.sample_size(10);
    for (label, f) in [("analytic", spike_field(128, 32)), ("sampled", sampled_spike_field(128, 32))] {
        let pairs = sample_pairs(f.grid(), 20, SEED);
        for k in [3, 5] {
            let solver = Solver::new(&f, SolverConfig::with_radius(k)).unwrap();
            group.bench_with_input(BenchmarkId::new(label, k), &pairs, |b, pairs| {
                b.iter(|| pairs.iter().map(|&(s, t)| solver.node_distance(s, t).unwrap()).sum::<f64>())
            });
        }
    }
    group.finish();
}

fn single_source(c: &mut Criterion) {
    let mut group = c.benchmark_group("single_source");
    group.sample_size(10);
    for n in [64, 128, 256] {
        let f = spike_field(n, 32);
        let solver = Solver::new(&f, SolverConfig::with_radius(3)).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solver.single_source(0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, pair_queries, single_source);
criterion_main!(benches);
