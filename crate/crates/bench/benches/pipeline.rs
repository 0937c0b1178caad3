use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use geospark::features::NUM_GEOM_FEATURES;
use geospark::gia::{geometry_informed_aggregation, GiaParams, NeighborContext};
use geospark::network::{init_model, train_step, NetworkConfig};
use geospark::tensor::{AdamW, Graph, ParamStore, Tensor};
use geospark::{build_adjacency, compute_geometric_features, cut_pursuit, Mat, PartitionProblem};
use geospark_bench::{room, toy_batch};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn features(c: &mut Criterion) {
    let cloud = room(50.0, 0);
    c.bench_function(&format!("features/{}pts", cloud.len()), |b| {
        b.iter(|| compute_geometric_features(black_box(&cloud), 10).unwrap())
    });
}

fn partition(c: &mut Criterion) {
    let cloud = room(50.0, 1);
    let f = compute_geometric_features(&cloud, 10).unwrap();
    let f = Mat::from_vec(cloud.len(), NUM_GEOM_FEATURES, f.flat()).unwrap();
    let graph = build_adjacency(&cloud, 10).unwrap();
    let mut group = c.benchmark_group(format!("cut_pursuit/{}pts", cloud.len()));
    group.sample_size(10);
    for lambda in [0.01, 3.0] {
        let problem = PartitionProblem::new(&graph, &f, lambda).unwrap();
        group.bench_function(format!("lambda={lambda}"), |b| b.iter(|| cut_pursuit(black_box(&problem))));
    }
    group.finish();
}

fn gia_forward(c: &mut Criterion) {
    let cloud = room(20.0, 2);
    let coords = cloud.coords();
    let sp: Vec<_> = coords.iter().step_by(20).copied().collect();
    let ctx = NeighborContext::build(coords, &sp, 16, 8).unwrap();
    let ch = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let params = GiaParams::new(&mut store, "gia", ch, &mut rng);
    let x = Tensor::from_vec(&[coords.len(), ch], (0..coords.len() * ch).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let s = Tensor::from_vec(&[sp.len(), ch], (0..sp.len() * ch).map(|i| (i as f64 * 0.11).cos()).collect()).unwrap();
    c.bench_function(&format!("gia_forward/{}pts_c{ch}", coords.len()), |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let xi = g.input(x.clone());
            let si = g.input(s.clone());
            geometry_informed_aggregation(&mut g, &store, &params, xi, Some(si), &ctx).unwrap()
        })
    });
}

fn train_step_bench(c: &mut Criterion) {
    let cfg = NetworkConfig::toy();
    let scenes = toy_batch(&cfg, cfg.batch as u64);
    let (model, store, _) = init_model(&cfg).unwrap();
    let opt = AdamW {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamW::default()
    };
    let mut group = c.benchmark_group("train_step");
    group.sample_size(10);
    group.bench_function(format!("toy_batch{}", scenes.len()), |b| {
        b.iter_batched(
            || store.clone(),
            |mut store| {
                let batch: Vec<_> = scenes.iter().collect();
                train_step(&model, &mut store, &batch, &opt).unwrap()
            },
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

criterion_group!(benches, features, partition, gia_forward, train_step_bench);
criterion_main!(benches);
