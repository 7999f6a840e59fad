use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use speechcorpus_bench::alignment_input;
use speechcorpus_core::ctcseg::{align, build_trellis};
use speechcorpus_core::ScoreConfig;

fn trellis(c: &mut Criterion) {
    let mut group = c.benchmark_group("trellis");
    for &frames in &[1_000usize, 5_000] {
        let (p, utts) = alignment_input(frames, 30, frames / 100, 12, 7);
        group.throughput(Throughput::Elements((frames * utts.len() * 12) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(frames), &frames, |b, _| {
            b.iter(|| build_trellis(&p, &utts, 0).unwrap())
        });
    }
    group.finish();
}

fn align_and_score(c: &mut Criterion) {
    let cfg = ScoreConfig::default();
    let mut group = c.benchmark_group("align");
    group.sample_size(20);
    for &frames in &[1_000usize, 5_000] {
        let (p, utts) = alignment_input(frames, 30, frames / 100, 12, 11);
        group.bench_with_input(BenchmarkId::from_parameter(frames), &frames, |b, _| {
            b.iter(|| align(&p, &utts, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, trellis, align_and_score);
criterion_main!(benches);
