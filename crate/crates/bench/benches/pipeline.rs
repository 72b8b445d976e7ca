use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use explorable_bench::document;
use explorable_core::corpus::{default_corpus_dir, CorpusProvider};
use explorable_core::lean::LeanRunner;
use explorable_core::pipeline::analyze;
use explorable_core::prober::{evaluate_at, sweep, Binding, ProbeContext};
use explorable_core::IntRange;

fn benches(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let runner = LeanRunner::reference();
    let ctx = ProbeContext::new(dir.path());
    let doc = document("b11", &runner, dir.path());
    let provider = CorpusProvider::new(default_corpus_dir());

    c.bench_function("analyze b11", |b| {
        b.iter(|| {
            let mut d = doc.clone();
            analyze(&mut d, &provider, &runner, dir.path(), 1).unwrap();
            black_box(d.graph.edges.len())
        })
    });
    c.bench_function("evaluate b11 at x=5", |b| {
        b.iter(|| evaluate_at(&doc, &Binding::new([("x", 5)]), &runner, &ctx).unwrap())
    });
    c.bench_function("sweep b11 over -10..10", |b| {
        b.iter(|| sweep(&doc, "x", IntRange::new(-10, 10), 201, &runner, &ctx).unwrap())
    });
}

criterion_group!(pipeline, benches);
criterion_main!(pipeline);
