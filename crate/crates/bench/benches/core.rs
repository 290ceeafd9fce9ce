use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use serra_bench::{model, synth, windows};
use serra_core::autodiff::{Graph, Tensor};
use serra_core::cluster::{ClusterAssignment, KMeansConfig};
use serra_core::train::{train, TrainConfig};
use serra_core::xai::{kernel_shap, lime_explain, select_background, LimeConfig, ShapConfig, TrainStats};

fn matmul(c: &mut Criterion) {
    let n = 64;
    let a = Tensor::new(vec![n, n], (0..n * n).map(|i| (i % 7) as f64 - 3.0).collect()).unwrap();
    c.bench_function("matmul_64_fwd_bwd", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let x = g.param(a.clone());
            let y = g.param(a.clone());
            let z = g.matmul(x, y).unwrap();
            let s = g.sum_all(z);
            black_box(g.backward(s).unwrap());
        })
    });
}

fn tft(c: &mut Criterion) {
    let ds = windows(1200, 12);
    let m = model(16, 12, ds.n_features(), 4);
    let batch: Vec<f64> = (0..64).flat_map(|i| ds.sample(i).to_vec()).collect();
    c.bench_function("tft_forward_batch64_d16", |b| b.iter(|| black_box(m.forward_batch(&batch, None).unwrap())));
    let small = ds.subset(&(0..256).collect::<Vec<_>>());
    let cfg = TrainConfig { epochs: 1, batch_size: 64, ..TrainConfig::default() };
    c.bench_function("tft_train_epoch256_d16", |b| {
        b.iter(|| {
            let mut m = model(16, 12, small.n_features(), 4);
            black_box(train(&mut m, &small, None, &cfg).unwrap())
        })
    });
}

fn explain(c: &mut Criterion) {
    let ds = windows(1200, 12);
    let m = model(8, 12, ds.n_features(), 4);
    let names = ds.feature_names().to_vec();
    let bg = select_background(&ds, 8, 0).unwrap();
    let x = ds.sample(10).to_vec();
    let cfg = ShapConfig { n_coalitions: 256, ..ShapConfig::default() };
    c.bench_function("kernel_shap_m10_bg8", |b| b.iter(|| black_box(kernel_shap(&m, &names, &bg, &x, 0, &cfg).unwrap())));
    let stats = TrainStats::from_dataset(&ds).unwrap();
    let cfg = LimeConfig { n_perturbations: 500, ..LimeConfig::default() };
    c.bench_function("lime_m10_500", |b| b.iter(|| black_box(lime_explain(&m, &names, &stats, &x, 0, &cfg).unwrap())));
}

fn kmeans(c: &mut Criterion) {
    let s = synth(2000);
    let cfg = KMeansConfig { k: 4, restarts: 5, ..KMeansConfig::default() };
    c.bench_function("kernel_kmeans_16x2000", |b| b.iter(|| black_box(ClusterAssignment::fit(&s.actuators, &cfg).unwrap())));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = matmul, tft, explain, kmeans
}
criterion_main!(benches);
