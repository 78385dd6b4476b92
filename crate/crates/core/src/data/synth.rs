//! Synthetic scenes whose labels are a deterministic function of planted cues.
//!
//! A class `c` splits into a contact bit `c % 2` and a distance level
//! `c / 2`:
//!
//! * contact: one object of category [`TARGET_CATEGORY`] sits on a wrist of
//!   person A when the bit is set, and away from every keypoint otherwise;
//! * distance: the nose-to-nose distance (normalized by the image diagonal)
//!   falls in bin `c / 2` of [`NOSE_DISTANCE_RANGE`];
//! * global: the global feature points along a direction tied to the
//!   distance level, so it alone cannot recover the contact bit.
//!
//! No keypoint of either person ever touches a non-target object, and object
//! categories and feature rows are drawn independently of the contact bit.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{write_feature_matrix, write_manifest, DatasetManifest, FeatureStore, Split};
use crate::error::{Error, Result};
use crate::geometry::{BBox, Keypoint, NUM_KEYPOINTS};
use crate::numerics::Matrix;
use crate::scene::{
    FeatureRef, HeatmapPeak, ObjectAnnotation, PersonAnnotation, RelationInstance, Scene,
};

pub const PISC_FINE_CLASSES: [&str; 6] = [
    "friend",
    "family",
    "couple",
    "professional",
    "commercial",
    "no relation",
];

/// Category of the object whose contact with a wrist carries the label bit.
pub const TARGET_CATEGORY: &str = "cup";
const DISTRACTOR_CATEGORIES: [&str; 4] = ["chair", "bottle", "laptop", "handbag"];

/// Range of normalized nose distances, split evenly into distance levels.
pub const NOSE_DISTANCE_RANGE: (f64, f64) = (0.12, 0.62);

const IMAGE_W: f64 = 640.0;
const IMAGE_H: f64 = 480.0;
const HEATMAP_PEAKS: usize = 12;
/// Objects away from people live below this line; every keypoint stays above it.
const FREE_STRIP_TOP: f64 = 410.0;

/// Keypoint offsets from the nose for an upright person, COCO order.
const POSE_TEMPLATE: [(f64, f64); NUM_KEYPOINTS] = [
    (0.0, 0.0),
    (-6.0, -6.0),
    (6.0, -6.0),
    (-12.0, -3.0),
    (12.0, -3.0),
    (-25.0, 30.0),
    (25.0, 30.0),
    (-32.0, 65.0),
    (32.0, 65.0),
    (-35.0, 100.0),
    (35.0, 100.0),
    (-15.0, 105.0),
    (15.0, 105.0),
    (-17.0, 140.0),
    (17.0, 140.0),
    (-18.0, 172.0),
    (18.0, 172.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_scenes: usize,
    pub num_classes: usize,
    pub seed: u64,
    /// Probability that a recorded label is replaced by a different class.
    pub rule_noise: f64,
    pub region_dim: usize,
    pub global_dim: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    /// Standard deviation of the Gaussian noise added to feature rows.
    pub feature_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_scenes: 1000,
            num_classes: 6,
            seed: 0,
            rule_noise: 0.0,
            region_dim: 32,
            global_dim: 16,
            train_fraction: 0.6,
            val_fraction: 0.2,
            feature_noise: 0.1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.rule_noise) {
            return fail(format!(
                "rule_noise must lie in [0, 1), got {}",
                self.rule_noise
            ));
        }
        if self.region_dim == 0 || self.global_dim == 0 {
            return fail("feature dimensions must be positive".into());
        }
        if !(self.train_fraction >= 0.0
            && self.val_fraction >= 0.0
            && self.train_fraction + self.val_fraction <= 1.0)
        {
            return fail("split fractions must be non-negative and sum to at most 1".into());
        }
        if !(self.feature_noise >= 0.0 && self.feature_noise.is_finite()) {
            return fail("feature_noise must be non-negative".into());
        }
        Ok(())
    }

    pub fn distance_levels(&self) -> usize {
        self.num_classes.div_ceil(2)
    }

    pub fn class_names(&self) -> Vec<String> {
        if self.num_classes == PISC_FINE_CLASSES.len() {
            PISC_FINE_CLASSES.iter().map(|s| s.to_string()).collect()
        } else {
            (0..self.num_classes)
                .map(|i| format!("class_{i}"))
                .collect()
        }
    }
}

/// The cue values planted for one scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleCues {
    pub contact: bool,
    pub distance_level: usize,
}

impl RuleCues {
    pub fn for_class(class: usize) -> Self {
        RuleCues {
            contact: class % 2 == 1,
            distance_level: class / 2,
        }
    }

    pub fn class(&self) -> usize {
        2 * self.distance_level + usize::from(self.contact)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub class_names: Vec<String>,
    pub train: Vec<Scene>,
    pub val: Vec<Scene>,
    pub test: Vec<Scene>,
    pub store: FeatureStore,
    /// Class each scene was generated from, before label noise, keyed by image id order.
    pub true_classes: Vec<(String, usize)>,
}

impl SyntheticSet {
    pub fn split(&self, split: Split) -> &[Scene] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, dim: usize, normal: &Normal<f64>) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / norm).collect()
}

struct FeatureRows {
    dim: usize,
    data: Vec<f64>,
}

impl FeatureRows {
    fn new(dim: usize) -> Self {
        FeatureRows {
            dim,
            data: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<f64>) -> usize {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend(row);
        self.data.len() / self.dim - 1
    }

    fn into_matrix(self) -> Result<Matrix> {
        let rows = self.data.len() / self.dim;
        Matrix::new(rows, self.dim, self.data)
    }
}

struct Generator {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
    noise: f64,
    person_base: Vec<f64>,
    level_person: Vec<Vec<f64>>,
    level_global: Vec<Vec<f64>>,
    category_dirs: Vec<Vec<f64>>,
    persons: FeatureRows,
    objects: FeatureRows,
    unions: FeatureRows,
    globals: FeatureRows,
}

impl Generator {
    fn new(config: &SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let levels = config.distance_levels();
        let person_base = unit_direction(&mut rng, config.region_dim, &normal);
        let level_person = (0..levels)
            .map(|_| unit_direction(&mut rng, config.region_dim, &normal))
            .collect();
        let level_global = (0..levels)
            .map(|_| unit_direction(&mut rng, config.global_dim, &normal))
            .collect();
        let category_dirs = (0..=DISTRACTOR_CATEGORIES.len())
            .map(|_| unit_direction(&mut rng, config.region_dim, &normal))
            .collect();
        Generator {
            rng,
            normal,
            noise: config.feature_noise,
            person_base,
            level_person,
            level_global,
            category_dirs,
            persons: FeatureRows::new(config.region_dim),
            objects: FeatureRows::new(config.region_dim),
            unions: FeatureRows::new(config.region_dim),
            globals: FeatureRows::new(config.global_dim),
        }
    }

    fn noisy(&mut self, signal: impl Iterator<Item = f64>) -> Vec<f64> {
        signal
            .map(|s| s + self.noise * self.normal.sample(&mut self.rng))
            .collect()
    }

    fn person(&mut self, nose: (f64, f64), level: usize) -> PersonAnnotation {
        let keypoints: Vec<Keypoint> = POSE_TEMPLATE
            .iter()
            .enumerate()
            .map(|(i, (dx, dy))| {
                let x = (nose.0 + dx + self.rng.random_range(-3.0..=3.0)).clamp(0.0, IMAGE_W);
                let y = (nose.1 + dy + self.rng.random_range(-3.0..=3.0)).clamp(0.0, IMAGE_H);
                let conf = self.rng.random_range(0.6..=1.0);
                Keypoint::new(x, y, conf, i).expect("generated keypoint is valid")
            })
            .collect();
        let heatmap_peaks = keypoints
            .iter()
            .map(|k| {
                (0..HEATMAP_PEAKS)
                    .map(|r| {
                        let spread = 4.0 * r as f64;
                        let jx = if r == 0 {
                            0.0
                        } else {
                            spread * self.normal.sample(&mut self.rng)
                        };
                        let jy = if r == 0 {
                            0.0
                        } else {
                            spread * self.normal.sample(&mut self.rng)
                        };
                        HeatmapPeak {
                            x: (k.x + jx).clamp(0.0, IMAGE_W),
                            y: (k.y + jy).clamp(0.0, IMAGE_H),
                            score: k.confidence * 0.8f64.powi(r as i32),
                        }
                    })
                    .collect()
            })
            .collect();
        let signal: Vec<f64> = self
            .person_base
            .iter()
            .zip(&self.level_person[level])
            .map(|(b, l)| b + 0.5 * l)
            .collect();
        let row = self.noisy(signal.into_iter());
        let r = self.persons.push(row);
        PersonAnnotation {
            bbox: BBox::new(
                (nose.0 - 40.0).max(0.0),
                (nose.1 - 20.0).max(0.0),
                (nose.0 + 40.0).min(IMAGE_W),
                (nose.1 + 180.0).min(IMAGE_H),
            )
            .expect("generated person box is valid"),
            keypoints,
            heatmap_peaks,
            feature_ref: FeatureRef::new("person", r),
        }
    }

    fn object(&mut self, bbox: BBox, category: usize) -> ObjectAnnotation {
        let dir = self.category_dirs[category].clone();
        let row = self.noisy(dir.into_iter());
        let r = self.objects.push(row);
        let name = if category == 0 {
            TARGET_CATEGORY
        } else {
            DISTRACTOR_CATEGORIES[category - 1]
        };
        ObjectAnnotation {
            bbox,
            category: name.to_string(),
            confidence: self.rng.random_range(0.5..=1.0),
            feature_ref: FeatureRef::new("object", r),
        }
    }

    fn strip_box(&mut self) -> BBox {
        let w = self.rng.random_range(24.0..=48.0);
        let h = self
            .rng
            .random_range(24.0..=(IMAGE_H - FREE_STRIP_TOP - 2.0));
        let x1 = self.rng.random_range(0.0..=(IMAGE_W - w));
        let y1 = self.rng.random_range(FREE_STRIP_TOP..=(IMAGE_H - h));
        BBox::new(x1, y1, x1 + w, y1 + h).expect("strip box is valid")
    }

    fn scene(
        &mut self,
        index: usize,
        class: usize,
        label: usize,
        config: &SynthConfig,
    ) -> Result<Scene> {
        let cues = RuleCues::for_class(class);
        let levels = config.distance_levels();
        let (lo, hi) = NOSE_DISTANCE_RANGE;
        let bin = (hi - lo) / levels as f64;
        let target = lo + bin * (cues.distance_level as f64 + self.rng.random_range(0.2..=0.8));
        let dist_px = target * IMAGE_W.hypot(IMAGE_H);
        let dy: f64 = self.rng.random_range(-30.0..=30.0);
        let dx = (dist_px * dist_px - dy * dy).sqrt();
        let nose_a = (
            self.rng.random_range(50.0..=(IMAGE_W - 50.0 - dx)),
            self.rng.random_range(60.0..=150.0),
        );
        let nose_b = (nose_a.0 + dx, nose_a.1 + dy);

        let pa = self.person(nose_a, cues.distance_level);
        let pb = self.person(nose_b, cues.distance_level);

        let distractors = self.rng.random_range(0..=3usize);
        let mut objects = Vec::with_capacity(1 + distractors);
        let target_box = if cues.contact {
            let wrist = pa.keypoints[if self.rng.random_bool(0.5) { 9 } else { 10 }];
            let half = self.rng.random_range(12.0..=18.0);
            BBox::new(
                (wrist.x - half).max(0.0),
                (wrist.y - half).max(0.0),
                (wrist.x + half).min(IMAGE_W),
                (wrist.y + half).min(IMAGE_H),
            )?
        } else {
            self.strip_box()
        };
        objects.push(self.object(target_box, 0));
        for _ in 0..distractors {
            let b = self.strip_box();
            let cat = self.rng.random_range(1..=DISTRACTOR_CATEGORIES.len());
            objects.push(self.object(b, cat));
        }
        objects.shuffle(&mut self.rng);

        let union_signal: Vec<f64> = {
            let fa =
                &self.persons.data[pa.feature_ref.row * self.persons.dim..][..self.persons.dim];
            let fb =
                &self.persons.data[pb.feature_ref.row * self.persons.dim..][..self.persons.dim];
            fa.iter().zip(fb).map(|(a, b)| 0.5 * (a + b)).collect()
        };
        let union_row = self.noisy(union_signal.into_iter());
        let union_ref = FeatureRef::new("union", self.unions.push(union_row));

        let global_signal = self.level_global[cues.distance_level].clone();
        let global_row = self.noisy(global_signal.into_iter());
        let global_ref = FeatureRef::new("global", self.globals.push(global_row));

        Ok(Scene {
            image_id: format!("synth_{index:05}"),
            width: IMAGE_W,
            height: IMAGE_H,
            persons: vec![pa, pb],
            objects,
            global_feature_ref: global_ref,
            pairs: vec![RelationInstance {
                person_a: 0,
                person_b: 1,
                label,
                union_feature_ref: Some(union_ref),
            }],
        })
    }
}

/// Builds a synthetic dataset in memory.
pub fn synthesize(config: &SynthConfig) -> Result<SyntheticSet> {
    config.validate()?;
    let mut gen = Generator::new(config);
    let c = config.num_classes;

    let mut classes: Vec<usize> = (0..config.num_scenes).map(|i| i % c).collect();
    classes.shuffle(&mut gen.rng);

    let mut scenes = Vec::with_capacity(config.num_scenes);
    let mut true_classes = Vec::with_capacity(config.num_scenes);
    for (i, &class) in classes.iter().enumerate() {
        let label = if config.rule_noise > 0.0 && gen.rng.random_bool(config.rule_noise) {
            let other = gen.rng.random_range(0..c - 1);
            if other >= class {
                other + 1
            } else {
                other
            }
        } else {
            class
        };
        let scene = gen.scene(i, class, label, config)?;
        true_classes.push((scene.image_id.clone(), class));
        scenes.push(scene);
    }

    let n_train = (config.num_scenes as f64 * config.train_fraction).round() as usize;
    let n_val = ((config.num_scenes as f64 * config.val_fraction).round() as usize)
        .min(config.num_scenes - n_train);
    let test = scenes.split_off(n_train + n_val);
    let val = scenes.split_off(n_train);

    let mut store = FeatureStore::new();
    store.insert("person", gen.persons.into_matrix()?);
    store.insert("object", gen.objects.into_matrix()?);
    store.insert("union", gen.unions.into_matrix()?);
    store.insert("global", gen.globals.into_matrix()?);

    Ok(SyntheticSet {
        class_names: config.class_names(),
        train: scenes,
        val,
        test,
        store,
        true_classes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub train_manifest: PathBuf,
    pub val_manifest: PathBuf,
    pub test_manifest: PathBuf,
    pub feature_store: PathBuf,
    pub scene_count: usize,
}

/// Writes `features.fmat`, `scenes/*.json` and one manifest per split into `out_dir`.
pub fn generate_synthetic(config: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<SynthOutput> {
    let set = synthesize(config)?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir.join("scenes"))?;
    let store_name = PathBuf::from("features.fmat");
    write_feature_matrix(out_dir.join(&store_name), &set.store)?;

    let mut manifests = Vec::with_capacity(3);
    for split in [Split::Train, Split::Val, Split::Test] {
        let mut paths = Vec::new();
        for scene in set.split(split) {
            let rel = PathBuf::from("scenes").join(format!("{}.json", scene.image_id));
            let mut text = scene.to_json_string()?;
            text.push('\n');
            std::fs::write(out_dir.join(&rel), text)?;
            paths.push(rel);
        }
        let manifest = DatasetManifest {
            class_names: set.class_names.clone(),
            feature_store: store_name.clone(),
            scenes: paths,
            split,
        };
        let path = out_dir.join(format!("{split}.json"));
        write_manifest(&path, &manifest)?;
        manifests.push(path);
    }
    let test_manifest = manifests.pop().expect("three manifests");
    let val_manifest = manifests.pop().expect("three manifests");
    let train_manifest = manifests.pop().expect("three manifests");
    Ok(SynthOutput {
        train_manifest,
        val_manifest,
        test_manifest,
        feature_store: out_dir.join(store_name),
        scene_count: config.num_scenes,
    })
}
