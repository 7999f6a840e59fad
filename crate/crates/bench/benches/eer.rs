use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use speechcorpus_bench::trials;
use speechcorpus_core::spkfilter::compute_eer;

fn eer(c: &mut Criterion) {
    let mut group = c.benchmark_group("compute_eer");
    for &n in &[1_100usize, 100_000] {
        let t = trials(n, 5);
        group.bench_with_input(BenchmarkId::from_parameter(n), &t, |b, t| {
            b.iter(|| compute_eer(t).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, eer);
criterion_main!(benches);
