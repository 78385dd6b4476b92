//! Person-Object and Person-Pose graphs for one labeled person pair.
//!
//! The Person-Object graph has three person nodes (the two persons and
//! their union) followed by one node per object. Person-object edges are
//! gated on whether any of that person's keypoints falls inside the
//! object box. The Person-Pose graph holds both persons' 17 keypoints,
//! joined by COCO skeleton bones within a person and by distance-weighted
//! edges from active keypoints across persons.

use serde::Serialize;

use crate::data::FeatureStore;
use crate::error::{Error, Result};
use crate::geometry::{keypoint_hits_box, normalized_distance, NUM_KEYPOINTS};
use crate::numerics::Matrix;
use crate::scene::{PersonAnnotation, RelationInstance, Scene};

/// Peaks per keypoint feature; three values each.
pub const PEAKS_PER_KEYPOINT: usize = 10;
pub const KEYPOINT_FEATURE_DIM: usize = 3 * PEAKS_PER_KEYPOINT;
pub const PPG_NODES: usize = 2 * NUM_KEYPOINTS;

const ACTIVE_KEYPOINTS: [usize; 5] = [0, 9, 10, 15, 16];

const COCO_SKELETON: [(usize, usize); 19] = [
    (15, 13),
    (13, 11),
    (16, 14),
    (14, 12),
    (11, 12),
    (5, 11),
    (6, 12),
    (5, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 2),
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (3, 5),
    (4, 6),
];

/// Nose, wrists and ankles: the keypoints allowed to reach across persons.
pub fn active_keypoint_indices() -> &'static [usize] {
    &ACTIVE_KEYPOINTS
}

/// The 19 COCO bones as 0-based keypoint index pairs.
pub fn coco_skeleton_edges() -> &'static [(usize, usize)] {
    &COCO_SKELETON
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PairSide {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeKind {
    PersonA,
    PersonB,
    Union,
    Object(usize),
    Pose { person: PairSide, keypoint: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationGraph {
    pub node_kinds: Vec<NodeKind>,
    /// Symmetric, zero diagonal, non-negative.
    pub adjacency: Matrix,
    pub features: Matrix,
    pub warnings: Vec<String>,
}

impl RelationGraph {
    pub fn node_count(&self) -> usize {
        self.node_kinds.len()
    }

    /// Fraction of off-diagonal entries that carry an edge.
    pub fn density(&self) -> f64 {
        let n = self.node_count();
        if n < 2 {
            return 0.0;
        }
        let edges = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.adjacency[(i, j)] > 0.0)
            .count();
        edges as f64 / (n * (n - 1)) as f64
    }
}

/// Knobs shared by both graph builders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphOptions {
    /// Half-side in pixels of the square a keypoint is grown to before the box test.
    pub dilation: f64,
    /// Keypoints below this confidence neither gate objects nor reach across persons.
    pub min_keypoint_confidence: f64,
    /// When false every person node links to every object node.
    pub pose_gating: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            dilation: 0.0,
            min_keypoint_confidence: 0.0,
            pose_gating: true,
        }
    }
}

fn pair_persons<'s>(
    scene: &'s Scene,
    instance: &RelationInstance,
) -> Result<(&'s PersonAnnotation, &'s PersonAnnotation)> {
    let get = |i: usize| {
        scene.persons.get(i).ok_or_else(|| {
            Error::InvalidInput(format!(
                "person index {i} out of range for scene {} with {} persons",
                scene.image_id,
                scene.persons.len()
            ))
        })
    };
    if instance.person_a == instance.person_b {
        return Err(Error::InvalidInput(
            "pair must name two distinct persons".into(),
        ));
    }
    Ok((get(instance.person_a)?, get(instance.person_b)?))
}

/// Person-object gates `[person][object]` for one person.
fn object_gates(person: &PersonAnnotation, scene: &Scene, opts: &GraphOptions) -> Vec<bool> {
    scene
        .objects
        .iter()
        .map(|o| {
            !opts.pose_gating
                || person.keypoints.iter().any(|k| {
                    k.confidence >= opts.min_keypoint_confidence
                        && keypoint_hits_box(k, &o.bbox, opts.dilation)
                })
        })
        .collect()
}

pub fn build_pog(
    scene: &Scene,
    instance: &RelationInstance,
    store: &FeatureStore,
    opts: &GraphOptions,
) -> Result<RelationGraph> {
    let (pa, pb) = pair_persons(scene, instance)?;
    let m = scene.objects.len();
    let n = 3 + m;

    let mut node_kinds = vec![NodeKind::PersonA, NodeKind::PersonB, NodeKind::Union];
    node_kinds.extend((0..m).map(NodeKind::Object));

    let mut adj = Matrix::zeros(n, n);
    let mut link = |i: usize, j: usize| {
        adj[(i, j)] = 1.0;
        adj[(j, i)] = 1.0;
    };
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        link(i, j);
    }
    for i in 3..n {
        for j in (i + 1)..n {
            link(i, j);
        }
    }
    let gates_a = object_gates(pa, scene, opts);
    let gates_b = object_gates(pb, scene, opts);
    for (j, (&ga, &gb)) in gates_a.iter().zip(&gates_b).enumerate() {
        if ga {
            link(0, 3 + j);
        }
        if gb {
            link(1, 3 + j);
        }
        if ga || gb {
            link(2, 3 + j);
        }
    }

    let feat_a = store.resolve(&pa.feature_ref)?;
    let feat_b = store.resolve(&pb.feature_ref)?;
    let dim = feat_a.len();
    let union: Vec<f64> = match &instance.union_feature_ref {
        Some(r) => store.resolve(r)?.to_vec(),
        None => feat_a
            .iter()
            .zip(feat_b)
            .map(|(x, y)| 0.5 * (x + y))
            .collect(),
    };
    let mut rows: Vec<&[f64]> = vec![feat_a, feat_b, &union];
    for o in &scene.objects {
        rows.push(store.resolve(&o.feature_ref)?);
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::Data(format!(
            "scene {}: region feature width {} differs from person width {dim}",
            scene.image_id,
            bad.len()
        )));
    }
    let features = Matrix::new(n, dim, rows.concat())?;

    Ok(RelationGraph {
        node_kinds,
        adjacency: adj,
        features,
        warnings: Vec::new(),
    })
}

pub fn build_ppg(
    scene: &Scene,
    instance: &RelationInstance,
    opts: &GraphOptions,
) -> Result<RelationGraph> {
    let (pa, pb) = pair_persons(scene, instance)?;
    for (side, p) in [("a", pa), ("b", pb)] {
        if p.keypoints.len() != NUM_KEYPOINTS {
            return Err(Error::Data(format!(
                "scene {}: person {side} has {} keypoints, need {NUM_KEYPOINTS}",
                scene.image_id,
                p.keypoints.len()
            )));
        }
    }
    let k = NUM_KEYPOINTS;
    let mut adj = Matrix::zeros(PPG_NODES, PPG_NODES);

    for offset in [0, k] {
        for &(u, v) in &COCO_SKELETON {
            adj[(offset + u, offset + v)] = 1.0;
            adj[(offset + v, offset + u)] = 1.0;
        }
    }

    let usable = |c: f64| c >= opts.min_keypoint_confidence;
    // Active keypoints of each side reach every keypoint of the other side.
    // When both endpoints are active the two rules write the same weight.
    for (from, to, from_off, to_off) in [(pa, pb, 0, k), (pb, pa, k, 0)] {
        for &u in &ACTIVE_KEYPOINTS {
            let ku = &from.keypoints[u];
            if !usable(ku.confidence) {
                continue;
            }
            for (v, kv) in to.keypoints.iter().enumerate() {
                if !usable(kv.confidence) {
                    continue;
                }
                let w = 2.0 - normalized_distance(ku, kv, scene.width, scene.height)?;
                adj[(from_off + u, to_off + v)] = w;
                adj[(to_off + v, from_off + u)] = w;
            }
        }
    }

    let mut node_kinds = Vec::with_capacity(PPG_NODES);
    let mut data = Vec::with_capacity(PPG_NODES * KEYPOINT_FEATURE_DIM);
    let mut warnings = Vec::new();
    for (side, person) in [(PairSide::A, pa), (PairSide::B, pb)] {
        for idx in 0..k {
            node_kinds.push(NodeKind::Pose {
                person: side,
                keypoint: idx,
            });
            let f = keypoint_feature_vector(person, idx, scene.width, scene.height)?;
            if f.padded {
                warnings.push(format!(
                    "scene {}: person {side:?} keypoint {idx} has fewer than {PEAKS_PER_KEYPOINT} heatmap peaks, padded with zeros",
                    scene.image_id
                ));
            }
            data.extend_from_slice(&f.values);
        }
    }

    Ok(RelationGraph {
        node_kinds,
        adjacency: adj,
        features: Matrix::new(PPG_NODES, KEYPOINT_FEATURE_DIM, data)?,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeypointFeature {
    pub values: [f64; KEYPOINT_FEATURE_DIM],
    /// Set when fewer than ten peaks were available.
    pub padded: bool,
}

/// Top ten heatmap peaks as `(x / w, y / h, score)` triples, best first.
pub fn keypoint_feature_vector(
    person: &PersonAnnotation,
    keypoint_index: usize,
    image_w: f64,
    image_h: f64,
) -> Result<KeypointFeature> {
    if !(image_w > 0.0 && image_h > 0.0) {
        return Err(Error::InvalidInput(format!(
            "image dimensions must be positive, got {image_w}x{image_h}"
        )));
    }
    let peaks = person
        .heatmap_peaks
        .get(keypoint_index)
        .ok_or_else(|| Error::Data(format!("no heatmap peaks for keypoint {keypoint_index}")))?;
    let mut values = [0.0; KEYPOINT_FEATURE_DIM];
    for (slot, p) in values.chunks_exact_mut(3).zip(peaks.iter()) {
        slot[0] = (p.x / image_w).clamp(0.0, 1.0);
        slot[1] = (p.y / image_h).clamp(0.0, 1.0);
        slot[2] = p.score;
    }
    Ok(KeypointFeature {
        values,
        padded: peaks.len() < PEAKS_PER_KEYPOINT,
    })
}
