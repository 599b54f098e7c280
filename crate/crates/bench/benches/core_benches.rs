//! Benchmarks for the hot paths: density and gradient evaluation, short
//! NUTS runs, and the data pipeline.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wellcap_core::dataset::{self, PipelinePolicy};
use wellcap_core::model::{self, ModelKind, ParamLayout, PriorConfig};
use wellcap_core::sampler::{run_nuts, SamplerConfig};
use wellcap_core::sim::{self, SimConfig};

const KINDS: [ModelKind; 3] = [
    ModelKind::Spatial,
    ModelKind::SpatioTemporal,
    ModelKind::Expanded,
];

fn bench_gradient(c: &mut Criterion) {
    let mut group = c.benchmark_group("grad_log_posterior");
    for kind in KINDS {
        let data = sim::random_prepared_dataset(kind, 50, 10, 2000, 7);
        let prior = PriorConfig::defaults_for(kind);
        let layout = ParamLayout::for_dataset(&data);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params: Vec<f64> = (0..layout.dim())
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(kind), &params, |b, params| {
            b.iter(|| model::grad_log_posterior(kind, black_box(params), &data, &prior).unwrap());
        });
    }
    group.finish();
}

fn bench_log_posterior(c: &mut Criterion) {
    let mut group = c.benchmark_group("log_posterior");
    for kind in KINDS {
        let data = sim::random_prepared_dataset(kind, 50, 10, 2000, 7);
        let prior = PriorConfig::defaults_for(kind);
        let layout = ParamLayout::for_dataset(&data);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params: Vec<f64> = (0..layout.dim())
            .map(|_| rng.random_range(-0.5..0.5))
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(kind), &params, |b, params| {
            b.iter(|| model::log_posterior(kind, black_box(params), &data, &prior).unwrap());
        });
    }
    group.finish();
}

fn bench_nuts_standard_normal(c: &mut Criterion) {
    c.bench_function("nuts_normal_10d_200_iters", |b| {
        let config = SamplerConfig {
            chains: 1,
            warmup: 100,
            draws_per_chain: 100,
            seed: 3,
            ..SamplerConfig::default()
        };
        b.iter(|| {
            run_nuts(
                |q: &[f64]| -0.5 * q.iter().map(|x| x * x).sum::<f64>(),
                |q: &[f64]| q.iter().map(|x| -x).collect(),
                10,
                &config,
            )
            .unwrap()
        });
    });
}

fn bench_pipeline(c: &mut Criterion) {
    let out = sim::simulate(&SimConfig::new(ModelKind::SpatioTemporal, 40, 8, 5000, 11)).unwrap();
    let policy = PipelinePolicy::defaults_for(ModelKind::SpatioTemporal);
    c.bench_function("prepare_5000_wells", |b| {
        b.iter(|| {
            dataset::prepare(
                black_box(out.records.clone()),
                policy,
                ModelKind::SpatioTemporal,
            )
            .unwrap()
        });
    });
}

criterion_group!(
    benches,
    bench_gradient,
    bench_log_posterior,
    bench_nuts_standard_normal,
    bench_pipeline
);
criterion_main!(benches);
