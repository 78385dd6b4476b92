//! Graph convolution, pooling, score fusion and the two-branch relation
//! model built from them.

mod checkpoint;
mod config;
mod model;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{TrainConfig, Variant, VariantFlags};
pub use model::{
    forward_instance, loss_and_grads, prepare_instance, InstanceLogits, ModelDims, ModelParams,
    PreparedInstance,
};
pub use train::{
    evaluate_dataset, lr_at_epoch, predict, predict_prepared, train, EpochRecord, Prediction,
    TrainOutput,
};

use crate::error::{Error, Result};
use crate::numerics::{relu, Matrix};

/// Tolerance on `w_global + w_graph == 1`.
pub const FUSION_WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayerParams {
    pub weight: Matrix,
}

/// `D^{-1/2} Ã D^{-1/2}` where `Ã = A + I` when `add_self_loops`.
pub fn normalize_adjacency(adjacency: &Matrix, add_self_loops: bool) -> Result<Matrix> {
    let n = adjacency.rows();
    if adjacency.cols() != n {
        return Err(Error::shape(
            "normalize_adjacency",
            adjacency.shape(),
            (n, n),
        ));
    }
    if !adjacency.is_symmetric() {
        return Err(Error::InvalidInput("adjacency must be symmetric".into()));
    }
    if adjacency.data().iter().any(|&w| w < 0.0) {
        return Err(Error::InvalidInput(
            "adjacency weights must be non-negative".into(),
        ));
    }
    let mut a = adjacency.clone();
    if add_self_loops {
        for i in 0..n {
            a[(i, i)] += 1.0;
        }
    }
    let mut degree = Vec::with_capacity(n);
    for i in 0..n {
        let d: f64 = a.row(i).iter().sum();
        if d <= 0.0 {
            return Err(Error::SingularDegree { row: i });
        }
        degree.push(d);
    }
    // a_ij / sqrt(d_i d_j) is exactly symmetric and exact on regular graphs.
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] /= (degree[i] * degree[j]).sqrt();
        }
    }
    Ok(a)
}

/// `σ(Â · X · W)` with σ = ReLU when `apply_activation`, identity otherwise.
pub fn gcn_layer_forward(
    norm_adj: &Matrix,
    x: &Matrix,
    layer: &GcnLayerParams,
    apply_activation: bool,
) -> Result<Matrix> {
    let z = norm_adj.matmul(x)?.matmul(&layer.weight)?;
    Ok(if apply_activation { relu(&z) } else { z })
}

/// Column-wise mean over nodes.
pub fn pool_nodes(x: &Matrix) -> Result<Vec<f64>> {
    if x.rows() == 0 {
        return Err(Error::InvalidInput("cannot pool an empty node set".into()));
    }
    let mut out = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        for (o, v) in out.iter_mut().zip(x.row(i)) {
            *o += v;
        }
    }
    let inv = 1.0 / x.rows() as f64;
    out.iter_mut().for_each(|o| *o *= inv);
    Ok(out)
}

pub fn check_fusion_weights(w_global: f64, w_graph: f64) -> Result<()> {
    if !(w_global >= 0.0 && w_graph >= 0.0) {
        return Err(Error::Config(format!(
            "fusion weights must be non-negative, got ({w_global}, {w_graph})"
        )));
    }
    if (w_global + w_graph - 1.0).abs() > FUSION_WEIGHT_TOLERANCE {
        return Err(Error::Config(format!(
            "fusion weights must sum to 1, got {w_global} + {w_graph}"
        )));
    }
    Ok(())
}

/// Convex combination of the global-branch and graph-branch distributions.
pub fn fuse_scores(
    global_probs: &[f64],
    graph_probs: &[f64],
    w_global: f64,
    w_graph: f64,
) -> Result<Vec<f64>> {
    check_fusion_weights(w_global, w_graph)?;
    if global_probs.len() != graph_probs.len() {
        return Err(Error::shape(
            "fuse_scores",
            (1, global_probs.len()),
            (1, graph_probs.len()),
        ));
    }
    Ok(global_probs
        .iter()
        .zip(graph_probs)
        .map(|(g, r)| w_global * g + w_graph * r)
        .collect())
}
