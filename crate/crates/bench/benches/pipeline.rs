//! Benchmarks for the hot paths: closed-form risk sweeps, batch sampling,
//! brute-force kNN, probe steps, and Heun integration.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use tglab_bench::{bench_spectrum, bench_t};
use tglab_core::geometry::aggregate_risk;
use tglab_core::montecarlo::{knn_conditional_variance, sample_batch};
use tglab_core::probe::{init_probe, train_probe, ProbeConfig, ProbeKind, TimeDistribution};
use tglab_core::sampler::{analytic_velocity_field, heun_integrate, SamplerConfig};
use tglab_core::types::TargetKind;

fn bench_aggregate_risk(c: &mut Criterion) {
    let spectrum = bench_spectrum(512);
    let t = bench_t();
    c.bench_function("aggregate_risk_512", |b| {
        b.iter(|| aggregate_risk(black_box(&spectrum), t, TargetKind::Velocity).unwrap())
    });
}

fn bench_sample_batch(c: &mut Criterion) {
    let spectrum = bench_spectrum(8);
    let t = bench_t();
    c.bench_function("sample_batch_100k_x8", |b| {
        b.iter(|| sample_batch(black_box(&spectrum), t, 100_000, 7).unwrap())
    });
}

fn bench_knn(c: &mut Criterion) {
    let spectrum = bench_spectrum(4);
    let batch = sample_batch(&spectrum, bench_t(), 200_000, 11).unwrap();
    let query = vec![0.0; 4];
    c.bench_function("knn_1024_of_200k", |b| {
        b.iter(|| {
            knn_conditional_variance(black_box(&batch), &query, 1024, TargetKind::Velocity)
                .unwrap()
        })
    });
}

fn bench_linear_probe_steps(c: &mut Criterion) {
    let spectrum = bench_spectrum(16);
    let config = ProbeConfig {
        kind: ProbeKind::LinearPerCoordinate,
        steps: 100,
        time_distribution: TimeDistribution::Fixed { t: 0.5 },
        ..ProbeConfig::default()
    };
    c.bench_function("linear_probe_100_steps", |b| {
        b.iter(|| {
            let probe = init_probe(&config, TargetKind::Clean, 16).unwrap();
            train_probe(probe, black_box(&spectrum), 3).unwrap()
        })
    });
}

fn bench_mlp_probe_steps(c: &mut Criterion) {
    let spectrum = bench_spectrum(16);
    let config = ProbeConfig {
        kind: ProbeKind::Mlp,
        hidden_width: 128,
        steps: 10,
        ..ProbeConfig::default()
    };
    c.bench_function("mlp_probe_10_steps", |b| {
        b.iter(|| {
            let probe = init_probe(&config, TargetKind::Velocity, 16).unwrap();
            train_probe(probe, black_box(&spectrum), 3).unwrap()
        })
    });
}

fn bench_heun(c: &mut Criterion) {
    let spectrum = bench_spectrum(8);
    let field = analytic_velocity_field(&spectrum);
    let config = SamplerConfig {
        steps: 50,
        t_max: 1.0,
        n: 2,
        seed: 0,
    };
    let z0 = vec![1.0; 8];
    c.bench_function("heun_50_steps_x8", |b| {
        b.iter(|| heun_integrate(black_box(&field), &z0, &config).unwrap())
    });
}

criterion_group!(
    benches,
    bench_aggregate_risk,
    bench_sample_batch,
    bench_knn,
    bench_linear_probe_steps,
    bench_mlp_probe_steps,
    bench_heun
);
criterion_main!(benches);
