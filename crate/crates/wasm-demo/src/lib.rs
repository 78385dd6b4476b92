//! WebAssembly bindings for the static demo page in `www/`.
//!
//! All results cross the boundary as JSON strings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use mgr_core::data::{synthesize, FeatureStore, SynthConfig};
use mgr_core::gcn::{fuse_scores, normalize_adjacency};
use mgr_core::geometry::{iou, BBox};
use mgr_core::graph::{build_pog, build_ppg, GraphOptions, NodeKind, RelationGraph};
use mgr_core::numerics::softmax;
use mgr_core::scene::Scene;

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

#[derive(Serialize)]
struct GraphView {
    nodes: Vec<String>,
    adjacency: Vec<Vec<f64>>,
    normalized: Vec<Vec<f64>>,
    density: f64,
}

#[derive(Serialize)]
struct GraphsView {
    pog: GraphView,
    ppg: GraphView,
}

fn node_name(kind: &NodeKind) -> String {
    match kind {
        NodeKind::PersonA => "person A".into(),
        NodeKind::PersonB => "person B".into(),
        NodeKind::Union => "union".into(),
        NodeKind::Object(j) => format!("object {j}"),
        NodeKind::Pose { person, keypoint } => format!("{person:?}{keypoint}"),
    }
}

fn view(g: &RelationGraph) -> mgr_core::Result<GraphView> {
    let rows = |m: &mgr_core::numerics::Matrix| (0..m.rows()).map(|i| m.row(i).to_vec()).collect();
    Ok(GraphView {
        nodes: g.node_kinds.iter().map(node_name).collect(),
        adjacency: rows(&g.adjacency),
        normalized: rows(&normalize_adjacency(&g.adjacency, true)?),
        density: g.density(),
    })
}

/// A handful of synthetic scenes plus their feature store.
#[wasm_bindgen]
pub struct DemoScenes {
    scenes: Vec<Scene>,
    store: FeatureStore,
    class_names: Vec<String>,
}

#[wasm_bindgen]
impl DemoScenes {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64, count: usize) -> Result<DemoScenes, JsValue> {
        let set = synthesize(&SynthConfig {
            num_scenes: count.max(2),
            seed,
            ..SynthConfig::default()
        })
        .map_err(js_err)?;
        let scenes = set
            .train
            .into_iter()
            .chain(set.val)
            .chain(set.test)
            .collect();
        Ok(DemoScenes {
            scenes,
            store: set.store,
            class_names: set.class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    /// Class name of the scene's first pair.
    pub fn label_of(&self, index: usize) -> Option<String> {
        let label = self.scenes.get(index)?.pairs.first()?.label;
        self.class_names.get(label).cloned()
    }

    /// Scene annotation in the on-disk JSON layout.
    pub fn scene_json(&self, index: usize) -> Result<String, JsValue> {
        self.scene(index)?.to_json_string().map_err(js_err)
    }

    /// Both relation graphs for the scene's first pair.
    pub fn graphs_json(
        &self,
        index: usize,
        dilation: f64,
        min_keypoint_confidence: f64,
        pose_gating: bool,
    ) -> Result<String, JsValue> {
        let scene = self.scene(index)?;
        let opts = GraphOptions {
            dilation,
            min_keypoint_confidence,
            pose_gating,
        };
        graphs_for(scene, &self.store, &opts)
            .and_then(|g| Ok(serde_json::to_string(&g)?))
            .map_err(js_err)
    }
}

impl DemoScenes {
    fn scene(&self, index: usize) -> Result<&Scene, JsValue> {
        self.scenes
            .get(index)
            .ok_or_else(|| js_err(format!("no scene {index}")))
    }
}

fn graphs_for(
    scene: &Scene,
    store: &FeatureStore,
    opts: &GraphOptions,
) -> mgr_core::Result<GraphsView> {
    let pair = &scene.pairs[0];
    Ok(GraphsView {
        pog: view(&build_pog(scene, pair, store, opts)?)?,
        ppg: view(&build_ppg(scene, pair, opts)?)?,
    })
}

/// Softmax of both logit vectors, fused with weights `(w_global, 1 - w_global)`.
#[wasm_bindgen]
pub fn fuse_logits(
    global_logits: &[f64],
    graph_logits: &[f64],
    w_global: f64,
) -> Result<Vec<f64>, JsValue> {
    fuse_scores(
        &softmax(global_logits),
        &softmax(graph_logits),
        w_global,
        1.0 - w_global,
    )
    .map_err(js_err)
}

/// IoU of two `[x1, y1, x2, y2]` boxes.
#[wasm_bindgen]
pub fn box_iou(a: &[f64], b: &[f64]) -> Result<f64, JsValue> {
    let parse = |v: &[f64]| match v {
        [x1, y1, x2, y2] => BBox::new(*x1, *y1, *x2, *y2).map_err(js_err),
        _ => Err(js_err("box needs four numbers")),
    };
    iou(&parse(a)?, &parse(b)?).map_err(js_err)
}
