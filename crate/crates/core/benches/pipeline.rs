//! Benchmark throughput over the fixture corpus: one worker against the
//! data-parallel pool.

#[path = "../tests/common/mod.rs"]
mod common;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sqlveil::eval::{run_benchmark, BenchmarkOptions};
use sqlveil::par;

/// Corpus copies per run, so each run is long enough to spread over workers.
const REPEAT: usize = 8;

fn corpus_throughput(c: &mut Criterion) {
    let fx = common::Fixture::new();
    let (pipeline, _) = common::perfect_pipeline(&fx, &common::Setup::default());
    let corpus: Vec<_> = std::iter::repeat_with(|| fx.corpus())
        .take(REPEAT)
        .flatten()
        .collect();
    let mut group = c.benchmark_group("run_benchmark");
    group.sample_size(10);
    for (label, jobs) in [("sequential", 1), ("parallel", par::default_jobs().max(2))] {
        let options = BenchmarkOptions {
            jobs,
            ..BenchmarkOptions::default()
        };
        group.bench_with_input(BenchmarkId::new(label, jobs), &options, |b, options| {
            b.iter(|| run_benchmark(&corpus, fx.db_dir(), &pipeline, options))
        });
    }
    group.finish();
}

criterion_group!(benches, corpus_throughput);
criterion_main!(benches);
