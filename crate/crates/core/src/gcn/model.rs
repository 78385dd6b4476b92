use rand::Rng;

use super::{normalize_adjacency, pool_nodes, GcnLayerParams, TrainConfig, VariantFlags};
use crate::data::FeatureStore;
use crate::error::{Error, Result};
use crate::graph::{build_pog, build_ppg, RelationGraph, KEYPOINT_FEATURE_DIM};
use crate::numerics::{
    glorot_from_rng, matmul, matmul_nt, matmul_tn, relu, softmax_cross_entropy, Matrix,
};
use crate::scene::{RelationInstance, Scene};

/// Input and layer widths of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDims {
    pub region_dim: usize,
    pub keypoint_dim: usize,
    pub global_dim: usize,
    pub num_classes: usize,
    pub pog_hidden: Vec<usize>,
    pub ppg_hidden: Vec<usize>,
}

impl ModelDims {
    pub fn new(
        region_dim: usize,
        global_dim: usize,
        num_classes: usize,
        config: &TrainConfig,
    ) -> Self {
        ModelDims {
            region_dim,
            keypoint_dim: KEYPOINT_FEATURE_DIM,
            global_dim,
            num_classes,
            pog_hidden: config.pog_hidden.clone(),
            ppg_hidden: config.ppg_hidden.clone(),
        }
    }
}

/// Weight plus a `1 x C` bias row.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Linear {
    fn apply(&self, input: &[f64]) -> Result<Vec<f64>> {
        let x = Matrix::row_vector(input)?;
        let mut out = matmul(&x, &self.weight)?;
        out.add_scaled(&self.bias, 1.0)?;
        Ok(out.into_data())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub flags: VariantFlags,
    pub pog_layers: Vec<GcnLayerParams>,
    pub ppg_layers: Vec<GcnLayerParams>,
    /// Head over the concatenated pooled graph features.
    pub classifier: Option<Linear>,
    pub global_classifier: Option<Linear>,
    pub seed: u64,
}

fn layer_stack<R: Rng + ?Sized>(
    input: usize,
    widths: &[usize],
    rng: &mut R,
) -> Vec<GcnLayerParams> {
    let mut d_in = input;
    widths
        .iter()
        .map(|&d_out| {
            let weight = glorot_from_rng(d_in, d_out, rng);
            d_in = d_out;
            GcnLayerParams { weight }
        })
        .collect()
}

fn take(named: &mut Vec<(String, Matrix)>, name: &str) -> Result<Matrix> {
    let pos = named
        .iter()
        .position(|(n, _)| n == name)
        .ok_or_else(|| Error::Format(format!("missing parameter {name}")))?;
    Ok(named.remove(pos).1)
}

fn take_stack(named: &mut Vec<(String, Matrix)>, prefix: &str) -> Result<Vec<GcnLayerParams>> {
    let mut layers = Vec::new();
    loop {
        let name = format!("{prefix}.{}.weight", layers.len());
        match take(named, &name) {
            Ok(weight) => layers.push(GcnLayerParams { weight }),
            Err(_) if !layers.is_empty() => return Ok(layers),
            Err(e) => return Err(e),
        }
    }
}

impl ModelParams {
    /// Glorot weights and zero biases. Draws come from `rng` in the order:
    /// person-object layers, person-pose layers, graph classifier, global classifier.
    pub fn init<R: Rng + ?Sized>(
        dims: &ModelDims,
        flags: VariantFlags,
        seed: u64,
        rng: &mut R,
    ) -> Self {
        let pog_layers = if flags.use_pog {
            layer_stack(dims.region_dim, &dims.pog_hidden, rng)
        } else {
            Vec::new()
        };
        let ppg_layers = if flags.use_ppg {
            layer_stack(dims.keypoint_dim, &dims.ppg_hidden, rng)
        } else {
            Vec::new()
        };
        let pooled: usize = [
            (flags.use_pog, &dims.pog_hidden),
            (flags.use_ppg, &dims.ppg_hidden),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, h)| h.last().copied().unwrap_or(0))
        .sum();
        let head = |d_in: usize, rng: &mut R| Linear {
            weight: glorot_from_rng(d_in, dims.num_classes, rng),
            bias: Matrix::zeros(1, dims.num_classes),
        };
        let classifier = flags.has_graph_branch().then(|| head(pooled, rng));
        let global_classifier = flags.use_global.then(|| head(dims.global_dim, rng));
        ModelParams {
            flags,
            pog_layers,
            ppg_layers,
            classifier,
            global_classifier,
            seed,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classifier
            .as_ref()
            .or(self.global_classifier.as_ref())
            .map_or(0, |l| l.weight.cols())
    }

    /// Stable parameter names, matching the order of [`tensors`](Self::tensors).
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        names.extend((0..self.pog_layers.len()).map(|i| format!("pog.{i}.weight")));
        names.extend((0..self.ppg_layers.len()).map(|i| format!("ppg.{i}.weight")));
        if self.classifier.is_some() {
            names.push("classifier.weight".into());
            names.push("classifier.bias".into());
        }
        if self.global_classifier.is_some() {
            names.push("global.weight".into());
            names.push("global.bias".into());
        }
        names
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = Vec::new();
        out.extend(self.pog_layers.iter().map(|l| &l.weight));
        out.extend(self.ppg_layers.iter().map(|l| &l.weight));
        for head in [&self.classifier, &self.global_classifier]
            .into_iter()
            .flatten()
        {
            out.push(&head.weight);
            out.push(&head.bias);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = Vec::new();
        out.extend(self.pog_layers.iter_mut().map(|l| &mut l.weight));
        out.extend(self.ppg_layers.iter_mut().map(|l| &mut l.weight));
        for head in [&mut self.classifier, &mut self.global_classifier]
            .into_iter()
            .flatten()
        {
            out.push(&mut head.weight);
            out.push(&mut head.bias);
        }
        out
    }

    /// Whether each tensor is a bias (excluded from weight decay).
    pub fn bias_mask(&self) -> Vec<bool> {
        self.tensor_names()
            .iter()
            .map(|n| n.ends_with(".bias"))
            .collect()
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|m| m.fill(0.0));
        z
    }

    /// Rebuilds from named tensors, checking that every expected name is present
    /// and the dimension chain is consistent.
    pub fn from_named(
        flags: VariantFlags,
        seed: u64,
        mut named: Vec<(String, Matrix)>,
    ) -> Result<Self> {
        let pog_layers = if flags.use_pog {
            take_stack(&mut named, "pog")?
        } else {
            Vec::new()
        };
        let ppg_layers = if flags.use_ppg {
            take_stack(&mut named, "ppg")?
        } else {
            Vec::new()
        };
        let classifier = if flags.has_graph_branch() {
            Some(Linear {
                weight: take(&mut named, "classifier.weight")?,
                bias: take(&mut named, "classifier.bias")?,
            })
        } else {
            None
        };
        let global_classifier = if flags.use_global {
            Some(Linear {
                weight: take(&mut named, "global.weight")?,
                bias: take(&mut named, "global.bias")?,
            })
        } else {
            None
        };
        if let Some((name, _)) = named.first() {
            return Err(Error::Format(format!("unexpected parameter {name}")));
        }
        let params = ModelParams {
            flags,
            pog_layers,
            ppg_layers,
            classifier,
            global_classifier,
            seed,
        };
        params.check_chain()?;
        Ok(params)
    }

    fn check_chain(&self) -> Result<()> {
        for layers in [&self.pog_layers, &self.ppg_layers] {
            for w in layers.windows(2) {
                if w[0].weight.cols() != w[1].weight.rows() {
                    return Err(Error::shape(
                        "layer chain",
                        w[0].weight.shape(),
                        w[1].weight.shape(),
                    ));
                }
            }
        }
        let c = self.num_classes();
        if let Some(head) = &self.classifier {
            let pooled: usize = [&self.pog_layers, &self.ppg_layers]
                .iter()
                .filter_map(|l| l.last())
                .map(|l| l.weight.cols())
                .sum();
            if head.weight.rows() != pooled
                || head.bias.shape() != (1, c)
                || head.weight.cols() != c
            {
                return Err(Error::shape(
                    "graph classifier",
                    head.weight.shape(),
                    (pooled, c),
                ));
            }
        }
        if let Some(head) = &self.global_classifier {
            if head.weight.cols() != c || head.bias.shape() != (1, c) {
                return Err(Error::shape(
                    "global classifier",
                    head.weight.shape(),
                    (head.weight.rows(), c),
                ));
            }
        }
        Ok(())
    }
}

/// A graph ready for propagation: normalized adjacency plus node features.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub norm_adj: Matrix,
    pub features: Matrix,
}

impl GraphInput {
    pub fn from_graph(graph: &RelationGraph) -> Result<Self> {
        Ok(GraphInput {
            norm_adj: normalize_adjacency(&graph.adjacency, true)?,
            features: graph.features.clone(),
        })
    }
}

/// Everything the model needs for one labeled pair, computed once.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInstance {
    pub pog: Option<GraphInput>,
    pub ppg: Option<GraphInput>,
    pub global: Option<Vec<f64>>,
    pub label: usize,
    pub pog_density: Option<f64>,
    pub warnings: Vec<String>,
}

impl PreparedInstance {
    pub fn from_graphs(
        pog: Option<&RelationGraph>,
        ppg: Option<&RelationGraph>,
        global: Option<&[f64]>,
        label: usize,
    ) -> Result<Self> {
        Ok(PreparedInstance {
            pog: pog.map(GraphInput::from_graph).transpose()?,
            ppg: ppg.map(GraphInput::from_graph).transpose()?,
            global: global.map(<[f64]>::to_vec),
            label,
            pog_density: pog.map(RelationGraph::density),
            warnings: pog
                .iter()
                .chain(ppg.iter())
                .flat_map(|g| g.warnings.iter().cloned())
                .collect(),
        })
    }
}

/// Builds only the graphs the configured variant uses.
pub fn prepare_instance(
    scene: &Scene,
    instance: &RelationInstance,
    store: &FeatureStore,
    config: &TrainConfig,
) -> Result<PreparedInstance> {
    let opts = config.graph_options();
    let pog = config
        .use_pog
        .then(|| build_pog(scene, instance, store, &opts))
        .transpose()?;
    let ppg = config
        .use_ppg
        .then(|| build_ppg(scene, instance, &opts))
        .transpose()?;
    let global = config
        .use_global
        .then(|| store.resolve(&scene.global_feature_ref))
        .transpose()?;
    PreparedInstance::from_graphs(pog.as_ref(), ppg.as_ref(), global, instance.label)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceLogits {
    pub graph: Option<Vec<f64>>,
    pub global: Option<Vec<f64>>,
}

struct BranchCache {
    /// `Â · H_l` per layer.
    propagated: Vec<Matrix>,
    /// `Â · H_l · W_l` per layer, before activation.
    pre_activation: Vec<Matrix>,
    pooled: Vec<f64>,
    nodes: usize,
}

fn branch_forward(input: &GraphInput, layers: &[GcnLayerParams]) -> Result<BranchCache> {
    let mut h = input.features.clone();
    let mut propagated = Vec::with_capacity(layers.len());
    let mut pre_activation = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let p = matmul(&input.norm_adj, &h)?;
        let z = matmul(&p, &layer.weight)?;
        h = if l + 1 < layers.len() {
            relu(&z)
        } else {
            z.clone()
        };
        propagated.push(p);
        pre_activation.push(z);
    }
    Ok(BranchCache {
        pooled: pool_nodes(&h)?,
        propagated,
        pre_activation,
        nodes: input.features.rows(),
    })
}

/// Accumulates weight gradients of one branch given `d loss / d pooled`.
fn branch_backward(
    cache: &BranchCache,
    input: &GraphInput,
    layers: &[GcnLayerParams],
    d_pooled: &[f64],
    grads: &mut [GcnLayerParams],
) -> Result<()> {
    let inv_n = 1.0 / cache.nodes as f64;
    let mut d_h = Matrix::zeros(cache.nodes, d_pooled.len());
    for i in 0..cache.nodes {
        for (d, g) in d_h.row_mut(i).iter_mut().zip(d_pooled) {
            *d = g * inv_n;
        }
    }
    for l in (0..layers.len()).rev() {
        let mut d_z = d_h;
        if l + 1 < layers.len() {
            for (d, z) in d_z
                .data_mut()
                .iter_mut()
                .zip(cache.pre_activation[l].data())
            {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        grads[l]
            .weight
            .add_scaled(&matmul_tn(&cache.propagated[l], &d_z)?, 1.0)?;
        if l == 0 {
            break;
        }
        let d_p = matmul_nt(&d_z, &layers[l].weight)?;
        d_h = matmul_tn(&input.norm_adj, &d_p)?;
    }
    Ok(())
}

struct ForwardCache {
    pog: Option<BranchCache>,
    ppg: Option<BranchCache>,
    graph_input: Vec<f64>,
    logits: InstanceLogits,
}

fn forward_cached(inst: &PreparedInstance, params: &ModelParams) -> Result<ForwardCache> {
    let branch = |on: bool, input: &Option<GraphInput>, layers: &[GcnLayerParams], name: &str| {
        if !on {
            return Ok(None);
        }
        let input = input.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!("{name} branch enabled but no graph prepared"))
        })?;
        let first = layers.first().map_or(0, |l| l.weight.rows());
        if input.features.cols() != first {
            return Err(Error::shape(
                "graph features vs first layer",
                input.features.shape(),
                (first, layers[0].weight.cols()),
            ));
        }
        branch_forward(input, layers).map(Some)
    };
    let pog = branch(
        params.flags.use_pog,
        &inst.pog,
        &params.pog_layers,
        "person-object",
    )?;
    let ppg = branch(
        params.flags.use_ppg,
        &inst.ppg,
        &params.ppg_layers,
        "person-pose",
    )?;
    let graph_input: Vec<f64> = pog
        .iter()
        .chain(ppg.iter())
        .flat_map(|c| c.pooled.iter().copied())
        .collect();
    let graph = params
        .classifier
        .as_ref()
        .map(|head| head.apply(&graph_input))
        .transpose()?;
    let global = match &params.global_classifier {
        Some(head) => {
            let g = inst.global.as_ref().ok_or_else(|| {
                Error::InvalidInput("global branch enabled but no global feature".into())
            })?;
            if g.len() != head.weight.rows() {
                return Err(Error::shape(
                    "global feature",
                    (1, g.len()),
                    head.weight.shape(),
                ));
            }
            Some(head.apply(g)?)
        }
        None => None,
    };
    Ok(ForwardCache {
        pog,
        ppg,
        graph_input,
        logits: InstanceLogits { graph, global },
    })
}

/// Class logits of every enabled head.
pub fn forward_instance(inst: &PreparedInstance, params: &ModelParams) -> Result<InstanceLogits> {
    Ok(forward_cached(inst, params)?.logits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub graph: f64,
    pub global: f64,
    pub logits: InstanceLogits,
}

/// Sum of the per-head cross-entropies; gradients are added into `grads`.
pub fn loss_and_grads(
    inst: &PreparedInstance,
    params: &ModelParams,
    grads: &mut ModelParams,
) -> Result<LossBreakdown> {
    let cache = forward_cached(inst, params)?;
    let finite = |l: &Option<Vec<f64>>| l.iter().flatten().all(|x| x.is_finite());
    if !finite(&cache.logits.graph) || !finite(&cache.logits.global) {
        return Ok(LossBreakdown {
            total: f64::NAN,
            graph: f64::NAN,
            global: f64::NAN,
            logits: cache.logits,
        });
    }
    let mut graph_loss = 0.0;
    let mut global_loss = 0.0;

    if let (Some(logits), Some(head), Some(g_head)) = (
        &cache.logits.graph,
        &params.classifier,
        grads.classifier.as_mut(),
    ) {
        let (loss, d_logits) = softmax_cross_entropy(logits, inst.label)?;
        graph_loss = loss;
        let d_row = Matrix::row_vector(&d_logits)?;
        let x = Matrix::row_vector(&cache.graph_input)?;
        g_head.weight.add_scaled(&matmul_tn(&x, &d_row)?, 1.0)?;
        g_head.bias.add_scaled(&d_row, 1.0)?;
        let d_input = matmul_nt(&d_row, &head.weight)?.into_data();

        let mut offset = 0;
        if let Some(c) = &cache.pog {
            let width = c.pooled.len();
            branch_backward(
                c,
                inst.pog.as_ref().expect("checked in forward"),
                &params.pog_layers,
                &d_input[offset..offset + width],
                &mut grads.pog_layers,
            )?;
            offset += width;
        }
        if let Some(c) = &cache.ppg {
            let width = c.pooled.len();
            branch_backward(
                c,
                inst.ppg.as_ref().expect("checked in forward"),
                &params.ppg_layers,
                &d_input[offset..offset + width],
                &mut grads.ppg_layers,
            )?;
        }
    }

    if let (Some(logits), Some(g_head), Some(feature)) = (
        &cache.logits.global,
        grads.global_classifier.as_mut(),
        &inst.global,
    ) {
        let (loss, d_logits) = softmax_cross_entropy(logits, inst.label)?;
        global_loss = loss;
        let d_row = Matrix::row_vector(&d_logits)?;
        let x = Matrix::row_vector(feature)?;
        g_head.weight.add_scaled(&matmul_tn(&x, &d_row)?, 1.0)?;
        g_head.bias.add_scaled(&d_row, 1.0)?;
    }

    Ok(LossBreakdown {
        total: graph_loss + global_loss,
        graph: graph_loss,
        global: global_loss,
        logits: cache.logits,
    })
}
