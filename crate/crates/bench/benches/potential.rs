use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lpgeo_bench::sampled_spike_field;
use lpgeo_core::{potential_field, PotentialConfig, SumMethod};

fn potential_methods(c: &mut Criterion) {
    let mut group = c.benchmark_group("potential_field");
    group.sample_size(10);
    for n in [32, 64, 128] {
        let f = sampled_spike_field(n, 16);
        for (label, method) in [("direct", SumMethod::Direct), ("fft", SumMethod::Fft)] {
            if method == SumMethod::Direct && n > 64 {
                continue;
            }
            let cfg = PotentialConfig { method, ..PotentialConfig::for_dim(2) };
            group.bench_with_input(BenchmarkId::new(label, n), &f, |b, f| {
                b.iter(|| potential_field(f, &cfg).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, potential_methods);
criterion_main!(benches);
