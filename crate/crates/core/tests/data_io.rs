mod common;

use std::fs;
use std::path::Path;

use mgr_core::data::{
    generate_synthetic, load_manifest, read_feature_matrix, synthesize, write_feature_matrix,
    FeatureStore, SynthConfig, NOSE_DISTANCE_RANGE, TARGET_CATEGORY,
};
use mgr_core::numerics::Matrix;
use mgr_core::scene::Scene;
use mgr_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

/// Recovers the generating class from scene geometry alone.
fn rule_class(scene: &Scene, num_classes: usize) -> usize {
    let levels = num_classes.div_ceil(2);
    let pa = &scene.persons[0];
    let pb = &scene.persons[1];
    let contact = scene.objects.iter().any(|o| {
        o.category == TARGET_CATEGORY
            && [9, 10].iter().any(|&w| {
                let k = &pa.keypoints[w];
                k.x >= o.bbox.x1 && k.x < o.bbox.x2 && k.y >= o.bbox.y1 && k.y < o.bbox.y2
            })
    });
    let (na, nb) = (&pa.keypoints[0], &pb.keypoints[0]);
    let d =
        ((na.x - nb.x).powi(2) + (na.y - nb.y).powi(2)).sqrt() / scene.width.hypot(scene.height);
    let (lo, hi) = NOSE_DISTANCE_RANGE;
    let q = (((d - lo) / ((hi - lo) / levels as f64)).floor().max(0.0) as usize).min(levels - 1);
    2 * q + usize::from(contact)
}

#[test]
fn synthetic_labels_follow_the_rule_at_zero_noise() {
    for classes in [2, 4, 6] {
        let cfg = SynthConfig {
            num_scenes: 600,
            num_classes: classes,
            seed: 21,
            ..SynthConfig::default()
        };
        let set = synthesize(&cfg).unwrap();
        let scenes: Vec<&Scene> = set.train.iter().chain(&set.val).chain(&set.test).collect();
        assert_eq!(scenes.len(), 600);
        let mut counts = vec![0usize; classes];
        for s in &scenes {
            let label = s.pairs[0].label;
            assert_eq!(rule_class(s, classes), label, "scene {}", s.image_id);
            counts[label] += 1;
        }
        let expected = 600.0 / classes as f64;
        for c in counts {
            assert!(c > 0);
            assert!(
                (c as f64 - expected).abs() <= 0.05 * expected,
                "count {c} vs {expected}"
            );
        }
    }
}

#[test]
fn rule_noise_flips_labels_at_the_configured_rate() {
    let cfg = SynthConfig {
        num_scenes: 2000,
        rule_noise: 0.2,
        seed: 3,
        ..SynthConfig::default()
    };
    let set = synthesize(&cfg).unwrap();
    let flipped = set
        .train
        .iter()
        .chain(&set.val)
        .chain(&set.test)
        .filter(|s| rule_class(s, 6) != s.pairs[0].label)
        .count();
    let rate = flipped as f64 / 2000.0;
    assert!((rate - 0.2).abs() < 0.03, "flip rate {rate}");
}

#[test]
fn split_sizes() {
    let set = synthesize(&SynthConfig {
        num_scenes: 1000,
        ..SynthConfig::default()
    })
    .unwrap();
    assert_eq!(
        (set.train.len(), set.val.len(), set.test.len()),
        (600, 200, 200)
    );
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn generation_is_byte_identical_for_a_seed() {
    let cfg = SynthConfig {
        num_scenes: 40,
        seed: 9,
        ..SynthConfig::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_synthetic(&cfg, a.path()).unwrap();
    generate_synthetic(&cfg, b.path()).unwrap();
    let (da, db) = (dir_bytes(a.path()), dir_bytes(b.path()));
    assert_eq!(da.len(), 40 + 4);
    assert_eq!(da, db);

    let c = tempfile::tempdir().unwrap();
    generate_synthetic(&SynthConfig { seed: 10, ..cfg }, c.path()).unwrap();
    assert_ne!(da, dir_bytes(c.path()));
}

#[test]
fn written_manifests_load() {
    let cfg = SynthConfig {
        num_scenes: 30,
        seed: 1,
        ..SynthConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let out = generate_synthetic(&cfg, dir.path()).unwrap();
    let (_, train) = load_manifest(&out.train_manifest).unwrap();
    let (_, test) = load_manifest(&out.test_manifest).unwrap();
    assert_eq!(
        train.scenes.len()
            + test.scenes.len()
            + load_manifest(&out.val_manifest).unwrap().1.scenes.len(),
        30
    );
    let set = synthesize(&cfg).unwrap();
    assert_eq!(train.scenes, set.train);
    assert_eq!(train.store, set.store);
}

fn first_scene_path(dir: &Path) -> std::path::PathBuf {
    let mut scenes: Vec<_> = fs::read_dir(dir.join("scenes"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    scenes.sort();
    let manifest: Value =
        serde_json::from_slice(&fs::read(dir.join("train.json")).unwrap()).unwrap();
    let first = manifest["scenes"][0].as_str().unwrap();
    scenes.into_iter().find(|p| p.ends_with(first)).unwrap()
}

fn edit_first_scene(dir: &Path, f: impl FnOnce(&mut Value)) {
    let path = first_scene_path(dir);
    let mut v: Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    f(&mut v);
    fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
}

fn fresh_dataset() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    generate_synthetic(
        &SynthConfig {
            num_scenes: 10,
            seed: 4,
            ..SynthConfig::default()
        },
        dir.path(),
    )
    .unwrap();
    dir
}

fn load_error(dir: &Path) -> String {
    match load_manifest(dir.join("train.json")) {
        Ok(_) => panic!("manifest unexpectedly loaded"),
        Err(e) => e.to_string(),
    }
}

#[test]
fn sixteen_keypoints_is_rejected() {
    let dir = fresh_dataset();
    edit_first_scene(dir.path(), |v| {
        v["persons"][1]["keypoints"].as_array_mut().unwrap().pop();
    });
    let msg = load_error(dir.path());
    assert!(msg.contains("keypoint count"), "{msg}");
    assert!(msg.contains("synth_"), "{msg}");
}

#[test]
fn out_of_range_label_is_rejected() {
    let dir = fresh_dataset();
    edit_first_scene(dir.path(), |v| v["pairs"][0]["label"] = 6.into());
    let msg = load_error(dir.path());
    assert!(msg.contains("label"), "{msg}");
}

#[test]
fn dangling_feature_ref_is_rejected() {
    let dir = fresh_dataset();
    edit_first_scene(dir.path(), |v| {
        v["objects"][0]["feature_ref"]["row"] = 100_000.into()
    });
    let msg = load_error(dir.path());
    assert!(msg.contains("100000"), "{msg}");
}

#[test]
fn too_few_heatmap_peaks_is_rejected() {
    let dir = fresh_dataset();
    edit_first_scene(dir.path(), |v| {
        v["persons"][0]["heatmap_peaks"][3]
            .as_array_mut()
            .unwrap()
            .truncate(9);
    });
    let msg = load_error(dir.path());
    assert!(msg.contains("peak"), "{msg}");
}

#[test]
fn missing_scene_file_is_a_load_error() {
    let dir = fresh_dataset();
    fs::remove_file(first_scene_path(dir.path())).unwrap();
    assert!(matches!(
        load_manifest(dir.path().join("train.json")),
        Err(Error::Load { .. })
    ));
}

#[test]
fn mutated_scene_bytes_never_panic() {
    let dir = fresh_dataset();
    let path = first_scene_path(dir.path());
    let original = fs::read(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..200 {
        let mut bytes = original.clone();
        for _ in 0..rng.random_range(1..6) {
            let i = rng.random_range(0..bytes.len());
            bytes[i] = rng.random();
        }
        if rng.random_bool(0.2) {
            bytes.truncate(rng.random_range(0..bytes.len()));
        }
        fs::write(&path, &bytes).unwrap();
        let _ = load_manifest(dir.path().join("train.json"));
    }
}

#[test]
fn mutated_feature_store_never_panics() {
    let mut store = FeatureStore::new();
    store.insert(
        "a",
        Matrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(),
    );
    store.insert("b", Matrix::zeros(1, 1));
    let original = store.to_bytes().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..2000 {
        let mut bytes = original.clone();
        let i = rng.random_range(0..bytes.len());
        bytes[i] = rng.random();
        if rng.random_bool(0.3) {
            bytes.truncate(rng.random_range(0..bytes.len()));
        }
        let _ = FeatureStore::from_bytes(&bytes);
    }
}

#[test]
fn feature_store_file_round_trip_is_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = FeatureStore::new();
    for name in ["person", "object", "global"] {
        let (r, c) = (rng.random_range(1..20), rng.random_range(1..20));
        let data = (0..r * c)
            .map(|_| f64::from_bits(rng.random::<u64>() & !(0x7ff << 52)) + rng.random::<f64>())
            .collect();
        store.insert(name, Matrix::new(r, c, data).unwrap());
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.fmat");
    write_feature_matrix(&path, &store).unwrap();
    let back = read_feature_matrix(&path).unwrap();
    for ((na, a), (nb, b)) in store.iter().zip(back.iter()) {
        assert_eq!(na, nb);
        assert!(a.bits().eq(b.bits()));
    }
    assert_eq!(fs::read(&path).unwrap()[..4], *b"FMAT");
}
