//! Benchmarks for the hot paths: the component fit, the kappa metric, the
//! affinity construction and the head fit.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use icx_core::formats::LabelVector;
use icx_core::head::{self, FitConfig, InputKind};
use icx_core::ica::{self, IcaConfig};
use icx_core::metrics::{self, ConfusionMatrix};
use icx_core::synthetic::{plant_dataset, SourceDistribution, SourceSpec};
use icx_core::tsne;

fn planted(seed: u64, n_samples: usize, m: usize) -> icx_core::synthetic::PlantedDataset {
    let spec = SourceSpec::new(
        vec![
            SourceDistribution::Laplace,
            SourceDistribution::Laplace,
            SourceDistribution::Uniform,
        ],
        seed,
    )
    .unwrap();
    plant_dataset(&spec, n_samples, m, 0.05, 5, seed).unwrap()
}

fn bench_fit_ica(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_ica");
    group.sample_size(10);
    for &n_samples in &[2_000usize, 10_000] {
        let dataset = planted(1, n_samples, 16);
        group.bench_with_input(
            BenchmarkId::from_parameter(n_samples),
            &dataset,
            |b, dataset| {
                b.iter(|| {
                    let model = ica::fit_ica(&dataset.features, &IcaConfig::new(3)).unwrap();
                    black_box(model.unmixing[[0, 0]])
                })
            },
        );
    }
    group.finish();
}

fn bench_qwk(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let counts = Array2::from_shape_fn((5, 5), |_| rng.random_range(0..500u64));
    let conf = ConfusionMatrix::new(counts).unwrap();
    c.bench_function("qwk_5x5", |b| {
        b.iter(|| black_box(metrics::qwk(black_box(&conf)).unwrap()))
    });
}

fn bench_affinities(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = Array2::from_shape_fn((300, 16), |_| rng.random_range(-1.0..1.0));
    c.bench_function("pairwise_affinities_300", |b| {
        b.iter(|| {
            let aff = tsne::pairwise_affinities(&data.view(), 30.0).unwrap();
            black_box(aff.p[[0, 1]])
        })
    });
}

fn bench_fit_head(c: &mut Criterion) {
    let dataset = planted(4, 2_000, 16);
    let x = dataset.features.to_f64();
    let labels: LabelVector = dataset.labels.clone();
    let cfg = FitConfig {
        epochs: 100,
        ..FitConfig::default()
    };
    c.bench_function("fit_head_2000x16", |b| {
        b.iter(|| {
            let head = head::fit_head(&x.view(), &labels, InputKind::Features, &cfg).unwrap();
            black_box(head.bias[0])
        })
    });
}

criterion_group!(
    benches,
    bench_fit_ica,
    bench_qwk,
    bench_affinities,
    bench_fit_head
);
criterion_main!(benches);
