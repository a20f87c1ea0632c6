use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use physrec_core::annealer::{anneal, build_pool, Objective};
use physrec_core::catalog::{generate_synthetic, SyntheticParams};
use physrec_core::kgraph::build_graph;
use physrec_core::neural::forward;
use physrec_core::textenc::encode;
use physrec_core::thermo::soft_basket;
use physrec_core::*;

fn encoder(c: &mut Criterion) {
    let config = EncoderConfig::default();
    c.bench_function("encode product name", |b| {
        b.iter(|| encode(black_box("organic low fat greek yogurt, vanilla"), &config).unwrap())
    });
}

fn softmax(c: &mut Criterion) {
    let scores: Vec<f64> = (0..500).map(|i| ((i * 37) % 101) as f64 / 50.0 - 1.0).collect();
    c.bench_function("soft basket over 500 products", |b| {
        b.iter(|| soft_basket(black_box(&scores), 0.5).unwrap())
    });
}

fn pipeline(c: &mut Criterion) {
    let ds = generate_synthetic(SyntheticParams::default()).unwrap();
    let (graph, _) = build_graph(&ds, &EncoderConfig::default(), GraphConfig::default()).unwrap();
    let params = ModelParams::for_graph(ModelConfig::default(), &graph, 1);

    c.bench_function("forward pass, default graph", |b| b.iter(|| forward(&graph, &params).unwrap()));

    let (emb, _) = forward(&graph, &params).unwrap();
    let scores = emb.user_scores(0);
    let targets = PhysioParams::default().targets(&ds.users[0]);
    let opt = OptConfig::default();
    let pool = build_pool(&scores, &graph.resolved_nutrients, &PoolConfig::default(), opt.k).unwrap();
    let obj = Objective {
        nutrients: &graph.resolved_nutrients,
        scores: &scores,
        targets,
        alpha: opt.alpha,
        beta: opt.beta,
    };
    c.bench_function("anneal one bundle, 5000 iterations", |b| b.iter(|| anneal(&pool, &obj, &opt).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = encoder, softmax, pipeline
}
criterion_main!(benches);
