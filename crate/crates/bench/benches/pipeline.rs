use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ssnerf_core::augment::{brightest_dilate, TauNoiseSampler, DEFAULT_BOUND};
use ssnerf_core::confidence::{epistemic_map, render_ensemble, EnsembleConfig};
use ssnerf_core::harness::{make_scene, SyntheticScene};
use ssnerf_core::renderer::{compute_weights, render_image};
use ssnerf_core::trainer::{real_loss_and_grad, sample_train_batch, StepAugment};
use ssnerf_core::{FieldConfig, FieldParams, RenderConfig};

fn tau_sampling(c: &mut Criterion) {
    let mut sampler = TauNoiseSampler::new(DEFAULT_BOUND, 1).unwrap();
    c.bench_function("tau_sample_1k", |b| {
        b.iter(|| (0..1000).map(|_| sampler.sample()).sum::<f64>())
    });
}

fn compositing(c: &mut Criterion) {
    let sigmas: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin().abs() * 4.0).collect();
    let deltas = vec![3.0 / 64.0; 64];
    c.bench_function("compute_weights_64", |b| {
        b.iter(|| compute_weights(black_box(&sigmas), black_box(&deltas)).unwrap())
    });
}

fn dilation(c: &mut Criterion) {
    let pixels: Vec<[f64; 3]> = (0..64 * 64)
        .map(|i| {
            let v = ((i * 7919) % 1000) as f64 / 1000.0;
            [v, 1.0 - v, 0.5]
        })
        .collect();
    c.bench_function("brightest_dilate_64x64_w3", |b| {
        b.iter(|| brightest_dilate(black_box(&pixels), 64, 64, 3).unwrap())
    });
}

fn training_step(c: &mut Criterion) {
    let mut spec = SyntheticScene::default_scene();
    spec.rig.width = 32;
    spec.rig.height = 32;
    let scene = make_scene(&spec, 3, 0, 0.5, 3.5).unwrap();
    let field = FieldParams::init(FieldConfig::default(), 3).unwrap();
    let config = RenderConfig {
        jitter: true,
        ..RenderConfig::default()
    };
    let batch = sample_train_batch(&scene.train.cameras, &scene.train.images, 64, 0, 0).unwrap();
    c.bench_function("loss_and_grad_64_rays", |b| {
        b.iter(|| real_loss_and_grad(&field, &batch, &config, &StepAugment::default()).unwrap())
    });
}

fn rendering(c: &mut Criterion) {
    let mut spec = SyntheticScene::default_scene();
    spec.rig.width = 24;
    spec.rig.height = 24;
    let camera = spec.rig.camera(10.0).unwrap();
    let field = FieldParams::init(FieldConfig::default(), 3).unwrap();
    let config = RenderConfig::default();
    c.bench_function("render_field_24x24", |b| {
        b.iter(|| render_image(&field, &camera, &config, None).unwrap())
    });
    c.bench_function("confidence_ensemble_24x24", |b| {
        b.iter_batched(
            || EnsembleConfig::default(),
            |ensemble| {
                let stack = render_ensemble(&field, &camera, &config, &ensemble, 5).unwrap();
                epistemic_map(&stack).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = tau_sampling, compositing, dilation, training_step, rendering
}
criterion_main!(benches);
