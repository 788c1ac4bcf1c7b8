use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nnm_bench::{random_graph, sentences};
use nnm_core::{export_gml, find_closest, import_gml, run_layout, FallbackEmbedder, LayoutParams};

fn layout(c: &mut Criterion) {
    let mut group = c.benchmark_group("layout");
    group.sample_size(10);
    for n in [50, 200, 1000] {
        let graph = random_graph(n, n, 1);
        let params = LayoutParams { iterations: 100, ..LayoutParams::default() };
        group.bench_with_input(BenchmarkId::from_parameter(n), &graph, |b, g| {
            b.iter(|| {
                let mut g = g.clone();
                run_layout(&mut g, &params).unwrap()
            })
        });
    }
    group.finish();
}

fn closest(c: &mut Criterion) {
    let e = FallbackEmbedder::default();
    let mut group = c.benchmark_group("find_closest");
    for n in [100, 1000] {
        let candidates: Vec<(usize, String)> = sentences(n, 2).into_iter().enumerate().collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &candidates, |b, cands| {
            b.iter(|| find_closest(black_box("hold fire at the checkpoint"), cands, &e, 5).unwrap())
        });
    }
    group.finish();
}

fn gml(c: &mut Criterion) {
    let graph = random_graph(1000, 2000, 3);
    let text = export_gml(&graph);
    c.bench_function("gml/export_1000", |b| b.iter(|| export_gml(black_box(&graph))));
    c.bench_function("gml/import_1000", |b| b.iter(|| import_gml(black_box(&text)).unwrap()));
}

criterion_group!(benches, layout, closest, gml);
criterion_main!(benches);
