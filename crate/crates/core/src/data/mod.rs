//! Dataset manifests, scene files, the binary feature store and the
//! synthetic scene generator.

pub(crate) mod binary;
mod store;
mod synth;

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use store::{
    read_feature_matrix, write_feature_matrix, FeatureStore, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use synth::{
    generate_synthetic, synthesize, RuleCues, SynthConfig, SynthOutput, SyntheticSet,
    NOSE_DISTANCE_RANGE, PISC_FINE_CLASSES, TARGET_CATEGORY,
};

use crate::error::{Error, Result};
use crate::scene::{FeatureRef, Scene, SceneLimits, DEFAULT_MAX_OBJECTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// On-disk manifest. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub class_names: Vec<String>,
    pub feature_store: PathBuf,
    pub scenes: Vec<PathBuf>,
    pub split: Split,
}

/// Validated in-memory dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub split: Split,
    pub scenes: Vec<Scene>,
    pub store: FeatureStore,
}

fn check_class_names(names: &[String]) -> Result<()> {
    if names.is_empty() {
        return Err(Error::Data("class_names must not be empty".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(Error::Data(format!("duplicate class name {dup:?}")));
    }
    Ok(())
}

fn ref_width(store: &FeatureStore, r: &FeatureRef) -> Result<usize> {
    Ok(store.resolve(r)?.len())
}

impl Dataset {
    /// Validates every scene against the class set, object cap and feature store.
    pub fn new(
        class_names: Vec<String>,
        split: Split,
        scenes: Vec<Scene>,
        store: FeatureStore,
        max_objects: usize,
    ) -> Result<Self> {
        check_class_names(&class_names)?;
        let limits = SceneLimits {
            num_classes: class_names.len(),
            max_objects,
        };
        let mut region_dim = None;
        let mut global_dim = None;
        for scene in &scenes {
            scene.validate(limits)?;
            check_scene_refs(scene, &store, &mut region_dim, &mut global_dim)?;
        }
        Ok(Dataset {
            class_names,
            split,
            scenes,
            store,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// `(scene index, pair index)` for every labeled pair, in file order.
    pub fn examples(&self) -> Vec<(usize, usize)> {
        self.scenes
            .iter()
            .enumerate()
            .flat_map(|(s, scene)| (0..scene.pairs.len()).map(move |p| (s, p)))
            .collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.scenes
            .iter()
            .flat_map(|s| s.pairs.iter().map(|p| p.label))
            .collect()
    }

    /// Width of person and object feature rows.
    pub fn region_dim(&self) -> Result<usize> {
        let r = self
            .scenes
            .iter()
            .flat_map(|s| s.persons.first())
            .next()
            .ok_or_else(|| Error::Data("dataset has no persons".into()))?;
        ref_width(&self.store, &r.feature_ref)
    }

    pub fn global_dim(&self) -> Result<usize> {
        let s = self
            .scenes
            .first()
            .ok_or_else(|| Error::Data("dataset has no scenes".into()))?;
        ref_width(&self.store, &s.global_feature_ref)
    }
}

fn check_scene_refs(
    scene: &Scene,
    store: &FeatureStore,
    region_dim: &mut Option<usize>,
    global_dim: &mut Option<usize>,
) -> Result<()> {
    let wrap = |e: Error| Error::Data(format!("scene {}: {e}", scene.image_id));
    for r in scene.region_refs() {
        let w = ref_width(store, r).map_err(wrap)?;
        match *region_dim {
            None => *region_dim = Some(w),
            Some(d) if d != w => {
                return Err(wrap(Error::Data(format!(
                    "region feature {:?} has width {w}, expected {d}",
                    r.name
                ))))
            }
            _ => {}
        }
    }
    let w = ref_width(store, &scene.global_feature_ref).map_err(wrap)?;
    match *global_dim {
        None => *global_dim = Some(w),
        Some(d) if d != w => {
            return Err(wrap(Error::Data(format!(
                "global feature has width {w}, expected {d}"
            ))))
        }
        _ => {}
    }
    Ok(())
}

/// Reads a manifest plus every scene and the feature store it names.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<(DatasetManifest, Dataset)> {
    load_manifest_with(path, DEFAULT_MAX_OBJECTS)
}

pub fn load_manifest_with(
    path: impl AsRef<Path>,
    max_objects: usize,
) -> Result<(DatasetManifest, Dataset)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::load(path, e.to_string()))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::load(path, format!("manifest schema: {e}")))?;
    check_class_names(&manifest.class_names).map_err(|e| Error::load(path, e.to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let store_path = base.join(&manifest.feature_store);
    let store = read_feature_matrix(&store_path)?;
    let limits = SceneLimits {
        num_classes: manifest.class_names.len(),
        max_objects,
    };

    let mut scenes = Vec::with_capacity(manifest.scenes.len());
    let (mut region_dim, mut global_dim) = (None, None);
    for rel in &manifest.scenes {
        let scene_path = base.join(rel);
        let located = |e: Error| Error::load(&scene_path, e.to_string());
        let text = std::fs::read_to_string(&scene_path).map_err(|e| located(e.into()))?;
        let scene = Scene::from_json_str(&text).map_err(located)?;
        scene.validate(limits).map_err(located)?;
        check_scene_refs(&scene, &store, &mut region_dim, &mut global_dim).map_err(located)?;
        scenes.push(scene);
    }
    let dataset = Dataset {
        class_names: manifest.class_names.clone(),
        split: manifest.split,
        scenes,
        store,
    };
    Ok((manifest, dataset))
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
