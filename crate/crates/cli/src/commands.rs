use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use serde::Serialize;

use mgr_core::data::{generate_synthetic, load_manifest, read_feature_matrix, SynthConfig};
use mgr_core::gcn::{
    evaluate_dataset, lr_at_epoch, predict as predict_pair, train as train_model, Checkpoint,
    EpochRecord, TrainConfig, Variant,
};
use mgr_core::geometry::normalized_distance;
use mgr_core::graph::{active_keypoint_indices, build_pog, build_ppg, NodeKind, RelationGraph};
use mgr_core::metrics::EvalReport;
use mgr_core::scene::{RelationInstance, Scene};

use crate::config::RunConfig;
use crate::Common;

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Config file first, then command-line overrides.
fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(v) = &common.variant {
        let variant: Variant = v.parse()?;
        cfg.train.set_variant(variant);
    }
    if let Some(out) = &common.out {
        cfg.paths.out = Some(out.clone());
    }
    Ok(cfg)
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected A,B but got {s:?}"))?;
    let a = a.trim().parse().map_err(|e| format!("person A: {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("person B: {e}"))?;
    Ok((a, b))
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[command(flatten)]
    common: Common,
    /// Total number of scenes across the three splits.
    #[arg(long, default_value_t = 1000)]
    scenes: usize,
    /// Number of relation classes (at least 2).
    #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u16).range(2..))]
    classes: u16,
    /// Probability that a label is replaced by another class.
    #[arg(long, default_value_t = 0.0)]
    rule_noise: f64,
    #[arg(long, default_value_t = 32)]
    region_dim: usize,
    #[arg(long, default_value_t = 16)]
    global_dim: usize,
}

pub fn gen_synth(args: GenSynthArgs) -> Result<()> {
    let cfg = resolve(&args.common)?;
    let out = args
        .common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("synth"));
    let synth = SynthConfig {
        num_scenes: args.scenes,
        num_classes: args.classes as usize,
        seed: args.common.seed.unwrap_or(cfg.train.seed),
        rule_noise: args.rule_noise,
        region_dim: args.region_dim,
        global_dim: args.global_dim,
        ..SynthConfig::default()
    };
    let written = generate_synthetic(&synth, &out)?;
    for m in [
        &written.train_manifest,
        &written.val_manifest,
        &written.test_manifest,
    ] {
        load_manifest(m).with_context(|| format!("validating {}", m.display()))?;
        println!("{}", m.display());
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Training manifest (overrides paths.train_manifest).
    #[arg(long)]
    train_manifest: Option<PathBuf>,
    /// Checkpoint path (default: OUT/model.mgrp).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr_decay_period: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    dilation: Option<f64>,
    #[arg(long)]
    min_keypoint_confidence: Option<f64>,
}

#[derive(Serialize)]
struct HistoryFile<'a> {
    config: &'a TrainConfig,
    variant: Option<String>,
    train_manifest: &'a Path,
    mean_pog_density: Option<f64>,
    epochs: &'a [EpochRecord],
}

pub fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = resolve(&args.common)?;
    let t = &mut cfg.train;
    macro_rules! apply {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = args.$flag { t.$field = v; })*
        };
    }
    apply!(epochs => epochs, lr => lr0, batch_size => batch_size, lr_decay_period => lr_decay_period_epochs,
           weight_decay => weight_decay, dilation => dilation, min_keypoint_confidence => min_keypoint_confidence);
    cfg.train.validate()?;

    let manifest = args
        .train_manifest
        .or(cfg.paths.train_manifest.clone())
        .context("no training manifest: pass --train-manifest or set paths.train_manifest")?;
    let (_, dataset) = load_manifest(&manifest)?;
    let out = cfg.out_dir();
    let checkpoint_path = args
        .checkpoint
        .or(cfg.paths.checkpoint.clone())
        .unwrap_or_else(|| out.join("model.mgrp"));

    let variant = cfg.train.variant().map(|v| v.to_string());
    eprintln!(
        "training {} on {} pairs from {} for {} epochs (lr0 {}, batch {})",
        variant.as_deref().unwrap_or("custom variant"),
        dataset.examples().len(),
        manifest.display(),
        cfg.train.epochs,
        cfg.train.lr0,
        cfg.train.batch_size
    );
    let result = train_model(&dataset, &cfg.train)?;
    for w in result.warnings.iter().take(5) {
        eprintln!("warning: {w}");
    }
    if let Some(d) = result.mean_pog_density {
        eprintln!("mean person-object adjacency density: {d:.6}");
    }
    for r in &result.history {
        eprintln!(
            "epoch {:>3}  lr {:.0e}  loss {:.5}  train acc {:.4}",
            r.epoch, r.lr, r.loss, r.train_accuracy
        );
    }
    debug_assert!(result
        .history
        .iter()
        .all(|r| r.lr == lr_at_epoch(&cfg.train, r.epoch)));

    let ckpt = Checkpoint {
        config: cfg.train.clone(),
        class_names: dataset.class_names.clone(),
        params: result.params,
    };
    if let Some(dir) = checkpoint_path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
    {
        std::fs::create_dir_all(dir)?;
    }
    ckpt.save(&checkpoint_path)?;
    Checkpoint::load(&checkpoint_path).context("re-reading written checkpoint")?;

    let history_path = out.join("history.json");
    write_json(
        &history_path,
        &HistoryFile {
            config: &cfg.train,
            variant,
            train_manifest: &manifest,
            mean_pog_density: result.mean_pog_density,
            epochs: &result.history,
        },
    )?;
    println!("{}", checkpoint_path.display());
    println!("{}", history_path.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Manifest to evaluate (overrides paths.test_manifest).
    #[arg(long)]
    test_manifest: Option<PathBuf>,
    /// Report path (default: OUT/report.json).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config: &'a TrainConfig,
    variant: Option<String>,
    manifest: &'a Path,
    report: &'a EvalReport,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let cfg = resolve(&args.common)?;
    let out = cfg.out_dir();
    let checkpoint = args
        .checkpoint
        .or(cfg.paths.checkpoint.clone())
        .unwrap_or_else(|| out.join("model.mgrp"));
    let manifest = args
        .test_manifest
        .or(cfg.paths.test_manifest.clone())
        .context("no test manifest: pass --test-manifest or set paths.test_manifest")?;
    let ckpt = Checkpoint::load(&checkpoint)?;
    let (_, dataset) = load_manifest(&manifest)?;
    ensure!(
        dataset.class_names == ckpt.class_names,
        "class names differ between checkpoint and {}",
        manifest.display()
    );

    let report = evaluate_dataset(&dataset, &ckpt.params, &ckpt.config)?;
    let report_path = args
        .report
        .or(cfg.paths.report.clone())
        .unwrap_or_else(|| out.join("report.json"));
    write_json(
        &report_path,
        &ReportFile {
            config: &ckpt.config,
            variant: ckpt.config.variant().map(|v| v.to_string()),
            manifest: &manifest,
            report: &report,
        },
    )?;

    eprintln!(
        "instances {}  accuracy {:.4}  mAP {:.4}",
        report.instances, report.overall_accuracy, report.map
    );
    for (k, name) in report.class_names.iter().enumerate() {
        let fmt = |v: Option<f64>| v.map_or("   n/a".to_string(), |x| format!("{x:.4}"));
        eprintln!(
            "  {name:<14} support {:>4}  recall {}  AP {}",
            report.support[k],
            fmt(report.per_class_recall[k]),
            fmt(report.per_class_ap[k])
        );
    }
    println!("{}", report_path.display());
    Ok(())
}

fn load_scene(path: &Path) -> Result<Scene> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scene::from_json_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// The scene's own pair entry when present (it may carry a union feature).
fn find_pair(scene: &Scene, (a, b): (usize, usize)) -> Result<RelationInstance> {
    if a >= scene.persons.len() || b >= scene.persons.len() || a == b {
        bail!(
            "pair {a},{b} invalid for scene {} with {} persons",
            scene.image_id,
            scene.persons.len()
        );
    }
    Ok(scene
        .pairs
        .iter()
        .find(|p| p.person_a == a && p.person_b == b)
        .cloned()
        .unwrap_or(RelationInstance {
            person_a: a,
            person_b: b,
            label: 0,
            union_feature_ref: None,
        }))
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Scene JSON file.
    #[arg(long)]
    scene: PathBuf,
    /// Person indices as A,B.
    #[arg(long, value_parser = parse_pair)]
    pair: (usize, usize),
    /// Feature store the scene's refs point into.
    #[arg(long)]
    features: PathBuf,
}

#[derive(Serialize)]
struct PredictionOut<'a> {
    image_id: &'a str,
    pair: [usize; 2],
    predicted: &'a str,
    predicted_index: usize,
    probabilities: Vec<ClassProb<'a>>,
}

#[derive(Serialize)]
struct ClassProb<'a> {
    class: &'a str,
    probability: f64,
}

pub fn predict(args: PredictArgs) -> Result<()> {
    let cfg = resolve(&args.common)?;
    let checkpoint = args
        .checkpoint
        .or(cfg.paths.checkpoint.clone())
        .unwrap_or_else(|| cfg.out_dir().join("model.mgrp"));
    let ckpt = Checkpoint::load(&checkpoint)?;
    let scene = load_scene(&args.scene)?;
    let store = read_feature_matrix(&args.features)?;
    let pair = find_pair(&scene, args.pair)?;
    let p = predict_pair(&scene, &pair, &store, &ckpt.params, &ckpt.config)?;
    let out = PredictionOut {
        image_id: &scene.image_id,
        pair: [pair.person_a, pair.person_b],
        predicted: &ckpt.class_names[p.class],
        predicted_index: p.class,
        probabilities: ckpt
            .class_names
            .iter()
            .zip(&p.probs)
            .map(|(class, &probability)| ClassProb { class, probability })
            .collect(),
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, value_parser = parse_pair)]
    pair: (usize, usize),
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    dilation: Option<f64>,
    #[arg(long)]
    min_keypoint_confidence: Option<f64>,
}

fn node_label(kind: &NodeKind) -> String {
    match kind {
        NodeKind::PersonA => "person_a".into(),
        NodeKind::PersonB => "person_b".into(),
        NodeKind::Union => "union".into(),
        NodeKind::Object(j) => format!("object_{j}"),
        NodeKind::Pose { person, keypoint } => format!("{person:?}.kp{keypoint}").to_lowercase(),
    }
}

fn render_graph(title: &str, g: &RelationGraph, out: &mut String) {
    let n = g.node_count();
    let _ = writeln!(out, "{title}: {n} nodes, density {:.4}", g.density());
    for (i, k) in g.node_kinds.iter().enumerate() {
        let _ = writeln!(out, "  [{i:>2}] {}", node_label(k));
    }
    let _ = writeln!(out, "  adjacency:");
    for i in 0..n {
        let row: Vec<String> = (0..n)
            .map(|j| format!("{:.3}", g.adjacency[(i, j)]))
            .collect();
        let _ = writeln!(out, "    {}", row.join(" "));
    }
}

pub fn inspect_graph(args: InspectArgs) -> Result<()> {
    let mut cfg = resolve(&args.common)?;
    if let Some(d) = args.dilation {
        cfg.train.dilation = d;
    }
    if let Some(c) = args.min_keypoint_confidence {
        cfg.train.min_keypoint_confidence = c;
    }
    cfg.train.validate()?;
    let scene = load_scene(&args.scene)?;
    let store = read_feature_matrix(&args.features)?;
    let pair = find_pair(&scene, args.pair)?;
    let opts = cfg.train.graph_options();
    let pog = build_pog(&scene, &pair, &store, &opts)?;
    let ppg = build_ppg(&scene, &pair, &opts)?;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "scene {} pair {},{} (pose gating {})",
        scene.image_id,
        pair.person_a,
        pair.person_b,
        if opts.pose_gating { "on" } else { "off" }
    );
    render_graph("POG", &pog, &mut out);
    render_graph("PPG", &ppg, &mut out);

    let _ = writeln!(out, "active inter-person edges (weight = 2 - dist):");
    let pa = &scene.persons[pair.person_a];
    let pb = &scene.persons[pair.person_b];
    for (from, from_name, to, to_name, from_off, to_off) in
        [(pa, "a", pb, "b", 0, 17), (pb, "b", pa, "a", 17, 0)]
    {
        for &u in active_keypoint_indices() {
            for v in 0..17 {
                let w = ppg.adjacency[(from_off + u, to_off + v)];
                if w > 0.0 {
                    let d = normalized_distance(
                        &from.keypoints[u],
                        &to.keypoints[v],
                        scene.width,
                        scene.height,
                    )?;
                    let _ = writeln!(
                        out,
                        "  {from_name}.kp{u} -> {to_name}.kp{v}  dist {d:.4}  weight {w:.4}"
                    );
                }
            }
        }
    }
    print!("{out}");
    Ok(())
}
