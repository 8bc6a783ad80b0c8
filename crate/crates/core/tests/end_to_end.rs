use proptest::prelude::*;
use ran_core::datasets::{
    generate_synthetic, manifest_to_string, parse_manifest, write_manifest, ManifestRecord,
    Occlusion, Pose, SyntheticSpec,
};
use ran_core::features::{load_feature_store, write_feature_store, FeatureStore};
use ran_core::numerics::{read_checkpoint, write_checkpoint};
use ran_core::pipeline::{
    build_model, evaluate, predict_all, train, Dataset, PreparedSet, Source, TrainConfig,
};
use ran_core::regions::write_pnm;
use ran_core::{HeadKind, Model, RealVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_spec() -> SyntheticSpec {
    SyntheticSpec {
        train_count: 36,
        test_count: 18,
        seed: 4,
        ..SyntheticSpec::default()
    }
}

#[test]
fn images_on_disk_train_like_images_in_memory() {
    let spec = small_spec();
    let set = generate_synthetic(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("img")).unwrap();
    let records: Vec<ManifestRecord> = set
        .train
        .iter()
        .map(|s| {
            let rel = format!("img/{}.pgm", s.id);
            write_pnm(&dir.path().join(&rel), &s.image).unwrap();
            ManifestRecord::new(s.id.clone(), rel, s.label)
        })
        .collect();
    let manifest = dir.path().join("train.csv");
    write_manifest(&manifest, &records).unwrap();

    let from_disk = Dataset::from_manifest(&records, dir.path(), spec.classes).unwrap();
    let in_memory = Dataset::from_synthetic(&set.train, spec.classes).unwrap();
    for (a, b) in from_disk.examples.iter().zip(&in_memory.examples) {
        match (&a.source, &b.source) {
            (Source::Image { image: x, .. }, Source::Image { image: y, .. }) => {
                assert_eq!(x.pixels(), y.pixels())
            }
            _ => panic!("expected image sources"),
        }
    }

    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let mut m1 = build_model(&cfg, &from_disk).unwrap();
    let mut m2 = build_model(&cfg, &in_memory).unwrap();
    train(&cfg, &mut m1, &from_disk).unwrap();
    train(&cfg, &mut m2, &in_memory).unwrap();
    assert_eq!(m1.params, m2.params);
}

/// Features where region 2 carries the class and the rest is noise.
fn feature_toy(n: usize, seed: u64) -> (Vec<ManifestRecord>, FeatureStore) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = FeatureStore::new(4);
    let records = (0..n)
        .map(|i| {
            let id = format!("f{i:03}");
            let label = i % 2;
            for region in 0..4 {
                let mut v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                if region == 2 {
                    v[0] = if label == 0 { -2.0 } else { 2.0 };
                    v[3] = 3.0;
                }
                store.insert(&id, region, RealVector::new(v)).unwrap();
            }
            ManifestRecord::new(id, "", label)
        })
        .collect();
    (records, store)
}

#[test]
fn feature_store_training_and_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (records, store) = feature_toy(80, 1);
    let path = dir.path().join("features.txt");
    write_feature_store(&path, &store).unwrap();
    let loaded = load_feature_store(&path).unwrap();
    assert_eq!(loaded.to_text(), store.to_text());

    let data = Dataset::from_features(&records, &loaded, 2).unwrap();
    assert!(data.uses_features());
    let cfg = TrainConfig {
        epochs: 30,
        feature_dim: 4,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let mut model = build_model(&cfg, &data).unwrap();
    train(&cfg, &mut model, &data).unwrap();
    let metrics = evaluate(&cfg, &model, &data).unwrap();
    assert!(metrics.overall_accuracy >= 0.95, "{}", metrics.to_json());

    let ckpt = dir.path().join("model.bin");
    write_checkpoint(&ckpt, &model.params).unwrap();
    let restored = Model::from_params(model.config, &read_checkpoint(&ckpt).unwrap()).unwrap();
    let set = PreparedSet::for_eval(&cfg, &data).unwrap();
    assert_eq!(
        predict_all(&model, &set).unwrap(),
        predict_all(&restored, &set).unwrap()
    );
}

#[test]
fn average_pool_head_trains_on_features() {
    let (records, store) = feature_toy(40, 2);
    let data = Dataset::from_features(&records, &store, 2).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        feature_dim: 4,
        head: HeadKind::AveragePool,
        ..TrainConfig::default()
    };
    let mut model = build_model(&cfg, &data).unwrap();
    let log = train(&cfg, &mut model, &data).unwrap();
    assert_eq!(log.len(), 3);
    assert!(log.iter().all(|e| e.mean_rb == 0.0));
}

fn arb_record() -> impl Strategy<Value = ManifestRecord> {
    (
        "[a-z][a-z0-9_]{0,8}",
        0usize..7,
        proptest::option::of((-90.0f64..90.0, -90.0f64..90.0, -180.0f64..180.0)),
        proptest::collection::btree_set(0usize..4, 0..4),
    )
        .prop_map(|(id, label, pose, occ)| {
            let mut r = ManifestRecord::new(id.clone(), format!("images/{id}.pgm"), label);
            r.pose = pose.map(|(pitch, yaw, roll)| Pose { pitch, yaw, roll });
            r.occlusions = occ.into_iter().map(|i| Occlusion::ALL[i]).collect();
            r
        })
}

proptest! {
    #[test]
    fn manifest_round_trips(records in proptest::collection::vec(arb_record(), 0..20)) {
        let mut seen = std::collections::HashSet::new();
        let unique: Vec<ManifestRecord> =
            records.into_iter().filter(|r| seen.insert(r.sample_id.clone())).collect();
        let text = manifest_to_string(&unique).unwrap();
        prop_assert_eq!(parse_manifest(&text).unwrap(), unique);
    }
}
