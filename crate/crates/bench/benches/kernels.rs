use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use latgraph::autodiff::pairwise_distances;
use latgraph::data_io::standardize;
use latgraph::model::forward;
use latgraph::synthetic::{
    clustered_dataset, generate_graph, neighbor_sum_targets, recover_graph, ClusterSpec,
    RecoveryConfig,
};
use latgraph::{Architecture, Graph, Matrix, ModelParams};

fn forward_backward(c: &mut Criterion) {
    let ds = clustered_dataset(&ClusterSpec::default()).unwrap();
    let x = standardize(&ds.x).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = ModelParams::init(&Architecture::default(), &x, ds.classes(), &mut rng).unwrap();
    let mask = vec![true; ds.len()];
    c.bench_function("forward_backward_300x100", |b| {
        b.iter(|| {
            let mut pass = forward(black_box(&x), &params, Graph::Latent, true).unwrap();
            let loss = pass
                .tape
                .row_softmax_cross_entropy(pass.logits, &ds.labels, &mask)
                .unwrap();
            black_box(pass.tape.backward(loss).unwrap());
        })
    });
}

fn distances(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let e = Matrix::uniform(300, 16, 1.0, &mut rng);
    c.bench_function("pairwise_distances_300x16", |b| {
        b.iter(|| black_box(pairwise_distances(black_box(&e))))
    });
}

fn recovery(c: &mut Criterion) {
    let graph = generate_graph(20, 0.3, 0).unwrap();
    let y = neighbor_sum_targets(&graph, &Matrix::identity(20)).unwrap();
    let cfg = RecoveryConfig {
        iterations: 100,
        embed_dim: 16,
        ..RecoveryConfig::default()
    };
    c.bench_function("recovery_20_nodes_100_steps", |b| {
        b.iter(|| black_box(recover_graph(&y, &cfg).unwrap()))
    });
}

criterion_group!(benches, forward_backward, distances, recovery);
criterion_main!(benches);
