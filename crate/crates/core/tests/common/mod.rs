#![allow(dead_code, clippy::needless_range_loop)]

use mgr_core::data::FeatureStore;
use mgr_core::geometry::{BBox, Keypoint};
use mgr_core::numerics::Matrix;
use mgr_core::scene::{
    FeatureRef, HeatmapPeak, ObjectAnnotation, PersonAnnotation, RelationInstance, Scene,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const REGION_DIM: usize = 6;
pub const GLOBAL_DIM: usize = 4;

fn random_person(rng: &mut ChaCha8Rng, w: f64, h: f64, row: usize) -> PersonAnnotation {
    let cx = rng.random_range(20.0..w - 20.0);
    let cy = rng.random_range(20.0..h - 20.0);
    let keypoints: Vec<Keypoint> = (0..17)
        .map(|i| {
            let x = (cx + rng.random_range(-60.0..60.0)).clamp(0.0, w);
            let y = (cy + rng.random_range(-90.0..90.0)).clamp(0.0, h);
            Keypoint::new(x, y, rng.random_range(0.0..=1.0), i).unwrap()
        })
        .collect();
    let heatmap_peaks = keypoints
        .iter()
        .map(|k| {
            let mut peaks: Vec<HeatmapPeak> = (0..rng.random_range(10..14))
                .map(|_| HeatmapPeak {
                    x: (k.x + rng.random_range(-5.0..5.0)).clamp(0.0, w),
                    y: (k.y + rng.random_range(-5.0..5.0)).clamp(0.0, h),
                    score: rng.random_range(0.0..=1.0),
                })
                .collect();
            peaks.sort_by(|a, b| b.score.total_cmp(&a.score));
            peaks
        })
        .collect();
    let xs = keypoints.iter().map(|k| k.x);
    let ys = keypoints.iter().map(|k| k.y);
    let (x1, x2) = (xs.clone().fold(f64::MAX, f64::min), xs.fold(0.0, f64::max));
    let (y1, y2) = (ys.clone().fold(f64::MAX, f64::min), ys.fold(0.0, f64::max));
    PersonAnnotation {
        bbox: BBox::new(x1, y1, x2 + 1.0, y2 + 1.0).unwrap(),
        keypoints,
        heatmap_peaks,
        feature_ref: FeatureRef::new("region", row),
    }
}

/// A scene with two persons and up to five objects. About half of the
/// objects are centered on a random keypoint so contact gates vary.
pub fn random_scene(rng: &mut ChaCha8Rng, max_objects: usize) -> (Scene, FeatureStore) {
    let (w, h) = (
        rng.random_range(200.0..800.0),
        rng.random_range(200.0..600.0),
    );
    let persons = vec![random_person(rng, w, h, 0), random_person(rng, w, h, 1)];
    let m = rng.random_range(0..=max_objects);
    let objects: Vec<ObjectAnnotation> = (0..m)
        .map(|j| {
            let (cx, cy) = if rng.random_bool(0.5) {
                let p = &persons[rng.random_range(0..2)];
                let k = &p.keypoints[rng.random_range(0..17)];
                (k.x, k.y)
            } else {
                (rng.random_range(0.0..w), rng.random_range(0.0..h))
            };
            let half = rng.random_range(2.0..30.0);
            ObjectAnnotation {
                bbox: BBox::new(
                    (cx - half).max(0.0),
                    (cy - half).max(0.0),
                    cx + half,
                    cy + half,
                )
                .unwrap(),
                category: "thing".into(),
                confidence: rng.random_range(0.0..=1.0),
                feature_ref: FeatureRef::new("region", 2 + j),
            }
        })
        .collect();
    let mut store = FeatureStore::new();
    let rows = 2 + m;
    store.insert(
        "region",
        Matrix::new(
            rows,
            REGION_DIM,
            (0..rows * REGION_DIM)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap(),
    );
    store.insert(
        "global",
        Matrix::new(
            1,
            GLOBAL_DIM,
            (0..GLOBAL_DIM)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap(),
    );
    let scene = Scene {
        image_id: format!("rand_{}", rng.random::<u32>()),
        width: w,
        height: h,
        persons,
        objects,
        global_feature_ref: FeatureRef::new("global", 0),
        pairs: vec![RelationInstance {
            person_a: 0,
            person_b: 1,
            label: 0,
            union_feature_ref: None,
        }],
    };
    (scene, store)
}

/// COCO skeleton as published (1-based), converted here to 0-based.
pub fn coco_skeleton_reference() -> Vec<(usize, usize)> {
    [
        [16, 14],
        [14, 12],
        [17, 15],
        [15, 13],
        [12, 13],
        [6, 12],
        [7, 13],
        [6, 7],
        [6, 8],
        [7, 9],
        [8, 10],
        [9, 11],
        [2, 3],
        [1, 2],
        [1, 3],
        [2, 4],
        [3, 5],
        [4, 6],
        [5, 7],
    ]
    .iter()
    .map(|[a, b]| (a - 1, b - 1))
    .collect()
}

/// Direct double loop over (person, keypoint, object) for the person-object adjacency.
pub fn pog_oracle(scene: &Scene, dilation: f64, min_conf: f64, gating: bool) -> Vec<Vec<f64>> {
    let m = scene.objects.len();
    let n = 3 + m;
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let both_persons = i < 3 && j < 3;
            let both_objects = i >= 3 && j >= 3;
            if both_persons || both_objects {
                a[i][j] = 1.0;
            }
        }
    }
    let touches = |p: usize, o: usize| -> bool {
        if !gating {
            return true;
        }
        let b = &scene.objects[o].bbox;
        let mut hit = false;
        for k in &scene.persons[p].keypoints {
            if k.confidence < min_conf {
                continue;
            }
            let (lx, hx, ly, hy) = (
                k.x - dilation,
                k.x + dilation,
                k.y - dilation,
                k.y + dilation,
            );
            if hx >= b.x1 && lx < b.x2 && hy >= b.y1 && ly < b.y2 {
                hit = true;
            }
        }
        hit
    };
    for o in 0..m {
        let ta = touches(0, o);
        let tb = touches(1, o);
        for (node, on) in [(0, ta), (1, tb), (2, ta || tb)] {
            if on {
                a[node][3 + o] = 1.0;
                a[3 + o][node] = 1.0;
            }
        }
    }
    a
}

/// Direct construction of the 34-node person-pose adjacency.
pub fn ppg_oracle(scene: &Scene, min_conf: f64) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; 34]; 34];
    for off in [0, 17] {
        for (u, v) in coco_skeleton_reference() {
            a[off + u][off + v] = 1.0;
            a[off + v][off + u] = 1.0;
        }
    }
    let active = [0usize, 9, 10, 15, 16];
    let diag = (scene.width * scene.width + scene.height * scene.height).sqrt();
    let (pa, pb) = (&scene.persons[0], &scene.persons[1]);
    for u in 0..17 {
        for v in 0..17 {
            if !(active.contains(&u) || active.contains(&v)) {
                continue;
            }
            let (ka, kb) = (&pa.keypoints[u], &pb.keypoints[v]);
            if ka.confidence >= min_conf && kb.confidence >= min_conf {
                let d = (((ka.x - kb.x).powi(2) + (ka.y - kb.y).powi(2)).sqrt() / diag).min(1.0);
                a[u][17 + v] = 2.0 - d;
                a[17 + v][u] = 2.0 - d;
            }
        }
    }
    a
}

pub fn as_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn synth_datasets(
    cfg: &mgr_core::data::SynthConfig,
) -> (mgr_core::data::Dataset, mgr_core::data::Dataset) {
    use mgr_core::data::{synthesize, Dataset, Split};
    use mgr_core::scene::DEFAULT_MAX_OBJECTS;
    let set = synthesize(cfg).unwrap();
    let train = Dataset::new(
        set.class_names.clone(),
        Split::Train,
        set.train,
        set.store.clone(),
        DEFAULT_MAX_OBJECTS,
    )
    .unwrap();
    let test = Dataset::new(
        set.class_names,
        Split::Test,
        set.test,
        set.store,
        DEFAULT_MAX_OBJECTS,
    )
    .unwrap();
    (train, test)
}

fn random_graph(rng: &mut ChaCha8Rng, nodes: usize, dim: usize) -> mgr_core::graph::RelationGraph {
    let mut adj = Matrix::zeros(nodes, nodes);
    for i in 0..nodes {
        for j in i + 1..nodes {
            if rng.random_bool(0.6) {
                let w = if rng.random_bool(0.5) {
                    1.0
                } else {
                    rng.random_range(1.0..2.0)
                };
                adj[(i, j)] = w;
                adj[(j, i)] = w;
            }
        }
    }
    mgr_core::graph::RelationGraph {
        node_kinds: (0..nodes).map(mgr_core::graph::NodeKind::Object).collect(),
        adjacency: adj,
        features: Matrix::new(
            nodes,
            dim,
            (0..nodes * dim)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap(),
        warnings: Vec::new(),
    }
}

/// Max relative error between backprop and central differences on a random
/// toy instance with both graph branches and the global head enabled.
pub fn toy_gradient_error(seed: u64, h: f64, floor: f64) -> f64 {
    use mgr_core::gcn::{loss_and_grads, ModelDims, ModelParams, PreparedInstance, VariantFlags};
    use mgr_core::numerics::{finite_diff_grad, max_relative_error};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ModelDims {
        region_dim: rng.random_range(2..=8),
        keypoint_dim: rng.random_range(2..=8),
        global_dim: rng.random_range(2..=8),
        num_classes: rng.random_range(2..=5),
        pog_hidden: (0..rng.random_range(1..=3))
            .map(|_| rng.random_range(2..=8))
            .collect(),
        ppg_hidden: (0..rng.random_range(1..=3))
            .map(|_| rng.random_range(2..=8))
            .collect(),
    };
    let (n_pog, n_ppg) = (rng.random_range(3..=8), rng.random_range(3..=8));
    let pog = random_graph(&mut rng, n_pog, dims.region_dim);
    let ppg = random_graph(&mut rng, n_ppg, dims.keypoint_dim);
    let global: Vec<f64> = (0..dims.global_dim)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let label = rng.random_range(0..dims.num_classes);
    let inst = PreparedInstance::from_graphs(Some(&pog), Some(&ppg), Some(&global), label).unwrap();
    let flags = VariantFlags {
        use_global: true,
        use_pog: true,
        use_ppg: true,
        pose_gating_on: true,
    };
    let mut params = ModelParams::init(&dims, flags, seed, &mut rng);
    for b in params.tensors_mut().into_iter().filter(|m| m.rows() == 1) {
        b.data_mut()
            .iter_mut()
            .for_each(|x| *x = rng.random_range(-0.5..0.5));
    }

    let mut grads = params.zeros_like();
    loss_and_grads(&inst, &params, &mut grads).unwrap();
    let analytic: Vec<Matrix> = grads.tensors().into_iter().cloned().collect();
    let flat: Vec<Matrix> = params.tensors().into_iter().cloned().collect();
    let numeric = finite_diff_grad(
        |theta| {
            let mut p = params.clone();
            for (dst, src) in p.tensors_mut().into_iter().zip(theta) {
                *dst = src.clone();
            }
            let mut scratch = p.zeros_like();
            loss_and_grads(&inst, &p, &mut scratch).unwrap().total
        },
        &flat,
        h,
    );
    max_relative_error(&analytic, &numeric, floor)
}
