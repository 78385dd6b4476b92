use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{
    loss_and_grads, prepare_instance, InstanceLogits, ModelDims, ModelParams, PreparedInstance,
};
use super::{forward_instance, fuse_scores, TrainConfig};
use crate::data::{Dataset, FeatureStore};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::numerics::{argmax, sgd_momentum_step, softmax, OptimizerState};
use crate::scene::{RelationInstance, Scene};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean over instances of the summed head losses.
    pub loss: f64,
    pub graph_loss: f64,
    pub global_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub dims: ModelDims,
    pub history: Vec<EpochRecord>,
    /// Mean person-object adjacency density over the training graphs.
    pub mean_pog_density: Option<f64>,
    pub warnings: Vec<String>,
}

/// Step schedule: `lr0 * factor^(epoch / period)` with 0-based epochs.
pub fn lr_at_epoch(config: &TrainConfig, epoch: usize) -> f64 {
    let steps = (epoch / config.lr_decay_period_epochs.max(1)) as i32;
    config.lr0 * config.lr_decay_factor.powi(steps)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub class: usize,
}

impl Prediction {
    fn from_logits(logits: &InstanceLogits, config: &TrainConfig) -> Result<Self> {
        let probs = match (&logits.global, &logits.graph) {
            (Some(global), Some(graph)) => fuse_scores(
                &softmax(global),
                &softmax(graph),
                config.fusion_weight_global,
                config.fusion_weight_graph,
            )?,
            (None, Some(only)) | (Some(only), None) => softmax(only),
            (None, None) => return Err(Error::InvalidInput("model has no enabled head".into())),
        };
        let class = argmax(&probs);
        Ok(Prediction { probs, class })
    }
}

pub fn predict_prepared(
    inst: &PreparedInstance,
    params: &ModelParams,
    config: &TrainConfig,
) -> Result<Prediction> {
    Prediction::from_logits(&forward_instance(inst, params)?, config)
}

/// Class distribution for one pair: per-head softmax, fused when both heads exist.
pub fn predict(
    scene: &Scene,
    instance: &RelationInstance,
    store: &FeatureStore,
    params: &ModelParams,
    config: &TrainConfig,
) -> Result<Prediction> {
    let inst = prepare_instance(scene, instance, store, config)?;
    predict_prepared(&inst, params, config)
}

/// Predicts every labeled pair of `dataset` and scores the result.
pub fn evaluate_dataset(
    dataset: &Dataset,
    params: &ModelParams,
    config: &TrainConfig,
) -> Result<EvalReport> {
    let mut probs = Vec::new();
    let mut labels = Vec::new();
    for (s, p) in dataset.examples() {
        let scene = &dataset.scenes[s];
        let pair = &scene.pairs[p];
        let inst = prepare_instance(scene, pair, &dataset.store, config)?;
        probs.push(predict_prepared(&inst, params, config)?.probs);
        labels.push(pair.label);
    }
    evaluate(&probs, &labels, &dataset.class_names)
}

/// Minibatch SGD with momentum over every labeled pair of `dataset`.
///
/// One ChaCha8 stream seeded from `config.seed` drives everything: first
/// parameter initialization, then one shuffle of the instance order per epoch.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    let examples = dataset.examples();
    if examples.is_empty() {
        return Err(Error::InvalidInput(
            "training set has no labeled pairs".into(),
        ));
    }
    let num_classes = dataset.num_classes();
    let dims = ModelDims::new(
        dataset.region_dim()?,
        dataset.global_dim()?,
        num_classes,
        config,
    );

    let mut prepared = Vec::with_capacity(examples.len());
    for &(s, p) in &examples {
        let scene = &dataset.scenes[s];
        let inst = &scene.pairs[p];
        if inst.label >= num_classes {
            return Err(Error::InvalidInput(format!(
                "scene {}: label {} out of range for {num_classes} classes",
                scene.image_id, inst.label
            )));
        }
        prepared.push(prepare_instance(scene, inst, &dataset.store, config)?);
    }
    let warnings: Vec<String> = prepared
        .iter()
        .flat_map(|p| p.warnings.iter().cloned())
        .collect();
    let densities: Vec<f64> = prepared.iter().filter_map(|p| p.pog_density).collect();
    let mean_pog_density =
        (!densities.is_empty()).then(|| densities.iter().sum::<f64>() / densities.len() as f64);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ModelParams::init(&dims, config.flags(), config.seed, &mut rng);
    let mut optimizer = OptimizerState::new(params.tensors());
    let bias_mask = params.bias_mask();
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let lr = lr_at_epoch(config, epoch);
        order.shuffle(&mut rng);
        let (mut total, mut graph, mut global, mut correct) = (0.0, 0.0, 0.0, 0usize);

        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grads = params.zeros_like();
            let mut batch_loss = 0.0;
            for &i in batch {
                let out = loss_and_grads(&prepared[i], &params, &mut grads)?;
                batch_loss += out.total;
                graph += out.graph;
                global += out.global;
                if Prediction::from_logits(&out.logits, config)?.class == prepared[i].label {
                    correct += 1;
                }
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                    lr,
                });
            }
            total += batch_loss;

            let scale = 1.0 / batch.len() as f64;
            let mut grad_tensors: Vec<_> = grads.tensors().into_iter().cloned().collect();
            for ((g, p), &is_bias) in grad_tensors
                .iter_mut()
                .zip(params.tensors())
                .zip(&bias_mask)
            {
                g.scale(scale);
                if config.weight_decay > 0.0 && !is_bias {
                    g.add_scaled(p, config.weight_decay)?;
                }
            }
            sgd_momentum_step(
                &mut params.tensors_mut(),
                &grad_tensors,
                &mut optimizer,
                lr,
                config.momentum,
            )?;
            if !params.tensors().iter().all(|m| m.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                    lr,
                });
            }
        }

        let n = prepared.len() as f64;
        history.push(EpochRecord {
            epoch,
            lr,
            loss: total / n,
            graph_loss: graph / n,
            global_loss: global / n,
            train_accuracy: correct as f64 / n,
        });
    }

    Ok(TrainOutput {
        params,
        dims,
        history,
        mean_pog_density,
        warnings,
    })
}
