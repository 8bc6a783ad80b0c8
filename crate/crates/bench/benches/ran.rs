use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ran_core::ran::{forward, BackboneKind, ModelConfig, RanParams};
use ran_core::regions::{area_downsample, build_crop_set, fixed_crops};
use ran_core::{FaceImage, HeadKind, Model, RealMatrix, RealVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn head(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = 64;
    let feats: Vec<RealVector> = (0..6)
        .map(|_| RealVector::new(random_vec(&mut rng, d)))
        .collect();
    let params = RanParams {
        q0: RealVector::new(random_vec(&mut rng, d)),
        q1: RealVector::new(random_vec(&mut rng, 2 * d)),
        classifier_w: RealMatrix::new(7, 2 * d, random_vec(&mut rng, 7 * 2 * d)).unwrap(),
        classifier_b: RealVector::new(random_vec(&mut rng, 7)),
    };
    c.bench_function("ran_head_forward_d64_k5", |b| {
        b.iter(|| forward(black_box(&feats), black_box(&params)).unwrap())
    });
}

fn model(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for kind in [HeadKind::Ran, HeadKind::AveragePool] {
        let config = ModelConfig {
            head: kind,
            classes: 3,
            feature_dim: 64,
            backbone: BackboneKind::Projection {
                downsample: 8,
                channels: 1,
                hidden: 64,
            },
            regions: 6,
        };
        let m = Model::new(config, 0).unwrap();
        let inputs: Vec<Vec<f64>> = (0..6)
            .map(|_| random_vec(&mut rng, m.input_dim()))
            .collect();
        let mut grads = m.params.grad_buffers();
        c.bench_function(&format!("{kind}_loss_and_grad"), |b| {
            b.iter(|| {
                m.loss_and_grad(black_box(&inputs), 1, 0.02, 1.0, Some(&mut grads))
                    .unwrap()
            })
        });
        c.bench_function(&format!("{kind}_predict"), |b| {
            b.iter(|| m.predict(black_box(&inputs)).unwrap())
        });
    }
}

fn crops(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let image = FaceImage::new(
        224,
        224,
        1,
        (0..224 * 224).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )
    .unwrap();
    let specs = fixed_crops(224, 224);
    c.bench_function("fixed_crop_set_224_to_64", |b| {
        b.iter(|| build_crop_set(black_box(&image), &specs, 64).unwrap())
    });
    let small = FaceImage::new(
        64,
        64,
        1,
        (0..64 * 64).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )
    .unwrap();
    c.bench_function("area_downsample_64_to_8", |b| {
        b.iter(|| area_downsample(black_box(&small), 8, 8))
    });
}

criterion_group!(benches, head, model, crops);
criterion_main!(benches);
