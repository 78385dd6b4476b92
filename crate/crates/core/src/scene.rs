//! Per-image annotations: persons, objects and labeled person pairs.
//!
//! Scenes are stored as JSON files whose keys mirror the types here.
//! Region and global features are not inline; they are referenced by
//! `(name, row)` into a [`FeatureStore`](crate::data::FeatureStore).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, Keypoint, NUM_KEYPOINTS};

/// Minimum number of heatmap peaks stored per keypoint.
pub const MIN_HEATMAP_PEAKS: usize = 10;

/// Default cap on object nodes per scene.
pub const DEFAULT_MAX_OBJECTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureRef {
    pub name: String,
    pub row: usize,
}

impl FeatureRef {
    pub fn new(name: impl Into<String>, row: usize) -> Self {
        FeatureRef {
            name: name.into(),
            row,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapPeak {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonAnnotation {
    pub bbox: BBox,
    /// Exactly [`NUM_KEYPOINTS`] entries in COCO order.
    pub keypoints: Vec<Keypoint>,
    /// Per keypoint, peaks in descending score order.
    pub heatmap_peaks: Vec<Vec<HeatmapPeak>>,
    pub feature_ref: FeatureRef,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectAnnotation {
    pub bbox: BBox,
    pub category: String,
    pub confidence: f64,
    pub feature_ref: FeatureRef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationInstance {
    pub person_a: usize,
    pub person_b: usize,
    pub label: usize,
    /// Feature of the union box of both persons, when the extractor provided one.
    pub union_feature_ref: Option<FeatureRef>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    pub persons: Vec<PersonAnnotation>,
    pub objects: Vec<ObjectAnnotation>,
    pub global_feature_ref: FeatureRef,
    pub pairs: Vec<RelationInstance>,
}

/// Bounds a scene is validated against.
#[derive(Debug, Clone, Copy)]
pub struct SceneLimits {
    pub num_classes: usize,
    pub max_objects: usize,
}

impl Scene {
    /// Checks every structural invariant. Feature refs are checked separately
    /// against a store.
    pub fn validate(&self, limits: SceneLimits) -> Result<()> {
        let bad = |msg: String| Err(Error::Data(format!("scene {}: {msg}", self.image_id)));
        if !(self.width.is_finite()
            && self.width > 0.0
            && self.height.is_finite()
            && self.height > 0.0)
        {
            return bad(format!(
                "image size {}x{} must be positive",
                self.width, self.height
            ));
        }
        if self.objects.len() > limits.max_objects {
            return bad(format!(
                "{} objects exceeds max_objects {}",
                self.objects.len(),
                limits.max_objects
            ));
        }
        if !self.pairs.is_empty() && self.persons.len() < 2 {
            return bad(format!(
                "pairs present but only {} persons",
                self.persons.len()
            ));
        }
        for (i, p) in self.persons.iter().enumerate() {
            if let Err(e) = p.validate(self.width, self.height) {
                return bad(format!("person {i}: {e}"));
            }
        }
        for (j, o) in self.objects.iter().enumerate() {
            if let Err(e) = o.bbox.validate() {
                return bad(format!("object {j}: {e}"));
            }
            if !(0.0..=1.0).contains(&o.confidence) {
                return bad(format!(
                    "object {j}: confidence {} outside [0, 1]",
                    o.confidence
                ));
            }
        }
        for (k, pair) in self.pairs.iter().enumerate() {
            let n = self.persons.len();
            if pair.person_a >= n || pair.person_b >= n {
                return bad(format!(
                    "pair {k}: person index ({}, {}) out of range for {n} persons",
                    pair.person_a, pair.person_b
                ));
            }
            if pair.person_a == pair.person_b {
                return bad(format!("pair {k}: a person cannot relate to itself"));
            }
            if pair.label >= limits.num_classes {
                return bad(format!(
                    "pair {k}: label {} out of range for {} classes",
                    pair.label, limits.num_classes
                ));
            }
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: SceneJson = serde_json::from_str(text)?;
        raw.try_into()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SceneJson::from(self))?)
    }

    /// All feature refs used by persons, objects and pair unions.
    pub fn region_refs(&self) -> impl Iterator<Item = &FeatureRef> {
        self.persons
            .iter()
            .map(|p| &p.feature_ref)
            .chain(self.objects.iter().map(|o| &o.feature_ref))
            .chain(
                self.pairs
                    .iter()
                    .filter_map(|p| p.union_feature_ref.as_ref()),
            )
    }
}

impl PersonAnnotation {
    fn validate(&self, width: f64, height: f64) -> Result<()> {
        self.bbox.validate()?;
        if self.keypoints.len() != NUM_KEYPOINTS {
            return Err(Error::Data(format!(
                "keypoint count {} != {NUM_KEYPOINTS}",
                self.keypoints.len()
            )));
        }
        for (i, k) in self.keypoints.iter().enumerate() {
            Keypoint::new(k.x, k.y, k.confidence, k.index)?;
            if k.index != i {
                return Err(Error::Data(format!(
                    "keypoint slot {i} carries index {}",
                    k.index
                )));
            }
            if !(0.0..=width).contains(&k.x) || !(0.0..=height).contains(&k.y) {
                return Err(Error::Data(format!(
                    "keypoint {i} at ({}, {}) outside the {width}x{height} image",
                    k.x, k.y
                )));
            }
        }
        if self.heatmap_peaks.len() != NUM_KEYPOINTS {
            return Err(Error::Data(format!(
                "heatmap peak list count {} != {NUM_KEYPOINTS}",
                self.heatmap_peaks.len()
            )));
        }
        for (i, peaks) in self.heatmap_peaks.iter().enumerate() {
            if peaks.len() < MIN_HEATMAP_PEAKS {
                return Err(Error::Data(format!(
                    "keypoint {i} has {} heatmap peaks, need at least {MIN_HEATMAP_PEAKS}",
                    peaks.len()
                )));
            }
            for p in peaks {
                if !(0.0..=width).contains(&p.x) || !(0.0..=height).contains(&p.y) {
                    return Err(Error::Data(format!(
                        "heatmap peak ({}, {}) of keypoint {i} outside the image",
                        p.x, p.y
                    )));
                }
                if !(0.0..=1.0).contains(&p.score) {
                    return Err(Error::Data(format!(
                        "heatmap peak score {} of keypoint {i} outside [0, 1]",
                        p.score
                    )));
                }
            }
            if peaks.windows(2).any(|w| w[0].score < w[1].score) {
                return Err(Error::Data(format!(
                    "heatmap peaks of keypoint {i} are not sorted by descending score"
                )));
            }
        }
        Ok(())
    }
}

// On-disk layout. Kept separate so the in-memory types can use richer
// field types while the file keys stay stable.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneJson {
    image_id: String,
    width: f64,
    height: f64,
    persons: Vec<PersonJson>,
    objects: Vec<ObjectJson>,
    global_feature_ref: FeatureRef,
    pairs: Vec<PairJson>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonJson {
    #[serde(rename = "box")]
    bbox: BBox,
    keypoints: Vec<[f64; 3]>,
    heatmap_peaks: Vec<Vec<[f64; 3]>>,
    feature_ref: FeatureRef,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectJson {
    #[serde(rename = "box")]
    bbox: BBox,
    category: String,
    confidence: f64,
    feature_ref: FeatureRef,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairJson {
    a: usize,
    b: usize,
    label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    union_feature_ref: Option<FeatureRef>,
}

impl TryFrom<SceneJson> for Scene {
    type Error = Error;

    fn try_from(raw: SceneJson) -> Result<Self> {
        let persons = raw
            .persons
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let keypoints = p
                    .keypoints
                    .iter()
                    .enumerate()
                    .map(|(k, [x, y, c])| {
                        Keypoint::new(*x, *y, *c, k)
                            .map_err(|e| Error::Data(format!("person {i}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let heatmap_peaks = p
                    .heatmap_peaks
                    .into_iter()
                    .map(|peaks| {
                        peaks
                            .into_iter()
                            .map(|[x, y, score]| HeatmapPeak { x, y, score })
                            .collect()
                    })
                    .collect();
                Ok(PersonAnnotation {
                    bbox: p.bbox,
                    keypoints,
                    heatmap_peaks,
                    feature_ref: p.feature_ref,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scene {
            image_id: raw.image_id,
            width: raw.width,
            height: raw.height,
            persons,
            objects: raw
                .objects
                .into_iter()
                .map(|o| ObjectAnnotation {
                    bbox: o.bbox,
                    category: o.category,
                    confidence: o.confidence,
                    feature_ref: o.feature_ref,
                })
                .collect(),
            global_feature_ref: raw.global_feature_ref,
            pairs: raw
                .pairs
                .into_iter()
                .map(|p| RelationInstance {
                    person_a: p.a,
                    person_b: p.b,
                    label: p.label,
                    union_feature_ref: p.union_feature_ref,
                })
                .collect(),
        })
    }
}

impl From<&Scene> for SceneJson {
    fn from(s: &Scene) -> Self {
        SceneJson {
            image_id: s.image_id.clone(),
            width: s.width,
            height: s.height,
            persons: s
                .persons
                .iter()
                .map(|p| PersonJson {
                    bbox: p.bbox,
                    keypoints: p
                        .keypoints
                        .iter()
                        .map(|k| [k.x, k.y, k.confidence])
                        .collect(),
                    heatmap_peaks: p
                        .heatmap_peaks
                        .iter()
                        .map(|peaks| peaks.iter().map(|h| [h.x, h.y, h.score]).collect())
                        .collect(),
                    feature_ref: p.feature_ref.clone(),
                })
                .collect(),
            objects: s
                .objects
                .iter()
                .map(|o| ObjectJson {
                    bbox: o.bbox,
                    category: o.category.clone(),
                    confidence: o.confidence,
                    feature_ref: o.feature_ref.clone(),
                })
                .collect(),
            global_feature_ref: s.global_feature_ref.clone(),
            pairs: s
                .pairs
                .iter()
                .map(|p| PairJson {
                    a: p.person_a,
                    b: p.person_b,
                    label: p.label,
                    union_feature_ref: p.union_feature_ref.clone(),
                })
                .collect(),
        }
    }
}
