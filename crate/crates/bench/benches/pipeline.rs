use citesim_bench::{batch, corpus, matrix};
use citesim_core::encoder::{cl_loss, embed_corpus, EncoderConfig};
use citesim_core::eval::rank_pool;
use citesim_core::graph_embed::knn;
use citesim_core::relations::{mine_bc, mine_cc, DEFAULT_MAX_DEGREE};
use citesim_core::synth::random_graph;
use citesim_core::{EncoderModel, LossConfig, NodeEmbeddings};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn mining(c: &mut Criterion) {
    let mut group = c.benchmark_group("mining");
    for n in [1_000, 5_000] {
        let g = random_graph(n, 10.0 / n as f64, 3);
        group.bench_with_input(BenchmarkId::new("cc", n), &g, |b, g| b.iter(|| mine_cc(g, DEFAULT_MAX_DEGREE)));
        group.bench_with_input(BenchmarkId::new("bc", n), &g, |b, g| b.iter(|| mine_bc(g, DEFAULT_MAX_DEGREE)));
    }
    group.finish();
}

fn ranking(c: &mut Criterion) {
    let m = matrix(20_000, 64);
    c.bench_function("rank_pool 20k x 64", |b| b.iter(|| rank_pool(&m, black_box(17))));
    let e = NodeEmbeddings::new(m).unwrap();
    c.bench_function("knn k=2005 over 20k", |b| b.iter(|| knn(&e, black_box(17), 2005)));
}

fn encoder(c: &mut Criterion) {
    let corpus = corpus(1_000);
    let model = EncoderModel::new(&EncoderConfig::default(), 0).unwrap();
    c.bench_function("embed 1k papers", |b| b.iter(|| embed_corpus(&model, &corpus)));
    let mut group = c.benchmark_group("cl_loss");
    for n in [16, 64] {
        let batch = batch(&corpus, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &batch, |b, batch| {
            b.iter(|| cl_loss(&model, batch, &LossConfig::contrastive()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, mining, ranking, encoder);
criterion_main!(benches);
