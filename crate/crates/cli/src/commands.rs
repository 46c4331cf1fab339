use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use kfh::data::{gen_synthetic, scale_node_features, GenConfig};
use kfh::estimators::{
    cost_model, expected_coarse_edges, expected_coarse_nodes, reduction_ratio, CostEstimate,
    CostParams, NodeEstimate,
};
use kfh::io::{self, CurveSummary};
use kfh::net::{
    evaluate, metrics_csv, train, Checkpoint, Evaluation, ModelConfig, ModelParams, Split,
    TrainConfig,
};
use kfh::qselect::log_grid;
use kfh::rng::derive_seed;
use kfh::{build_hierarchy, reboot, sample_forest, select_q_many, AggMode, Graph, Hierarchy};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::args::*;
use crate::output::{manifest_path, write_atomic, write_json, write_manifest};
use crate::UsageError;

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenData(a) => gen_data(cli, a),
        Command::SampleForest(a) => sample(cli, a),
        Command::Hierarchy(a) => hierarchy(cli, a),
        Command::SelectQ(a) => select(cli, a),
        Command::Estimate(a) => estimate(cli, a),
        Command::Train(a) => train_cmd(cli, a),
        Command::Eval(a) => eval_cmd(cli, a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read_dataset(path: &Path) -> Result<Vec<Graph>> {
    io::read_dataset(path).with_context(|| format!("reading {}", path.display()))
}

fn read_graph(path: &Path) -> Result<Graph> {
    io::read_graph(path).with_context(|| format!("reading {}", path.display()))
}

/// Graph `i` is coarsened with seed `derive_seed(seed, i)`.
pub fn build_all(graphs: &[Graph], qs: &[f64], mode: AggMode, seed: u64) -> Result<Vec<Hierarchy>> {
    let hs = graphs
        .par_iter()
        .enumerate()
        .map(|(i, g)| build_hierarchy(g, qs, mode, derive_seed(seed, i as u64)))
        .collect::<kfh::Result<Vec<_>>>()?;
    Ok(hs)
}

fn scaled(graphs: Vec<Graph>, factor: f64) -> Result<Vec<Graph>> {
    if factor == 1.0 {
        Ok(graphs)
    } else {
        Ok(scale_node_features(&graphs, factor)?)
    }
}

fn gen_data(cli: &Cli, a: &GenDataArgs) -> Result<()> {
    let graphs = gen_synthetic(&GenConfig {
        task: a.task,
        n_graphs: a.n_graphs,
        min_nodes: a.min_nodes,
        max_nodes: a.max_nodes,
        seed: cli.seed,
    })?;
    write_atomic(&a.out, io::dataset_to_jsonl(&graphs).as_bytes())?;
    info!("wrote {} graphs to {}", graphs.len(), a.out.display());
    write_manifest(
        cli,
        &manifest_path(&a.out, false),
        std::slice::from_ref(&a.out),
    )
}

fn sample(cli: &Cli, a: &SampleForestArgs) -> Result<()> {
    let g = read_graph(&a.input)?;
    let mut forest = sample_forest(&g, a.q.0, cli.seed)?;
    if let Some(q2) = a.reboot {
        if q2.0 >= a.q.0 {
            return Err(usage("--reboot must be smaller than --q"));
        }
        forest = reboot(&g, &forest, q2.0, derive_seed(cli.seed, 1))?;
    }
    info!("{} roots on {} nodes", forest.root_count(), g.n());
    write_atomic(&a.out, io::forest_to_json(&forest).as_bytes())?;
    write_manifest(
        cli,
        &manifest_path(&a.out, false),
        std::slice::from_ref(&a.out),
    )
}

fn is_jsonl(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "jsonl")
}

fn hierarchy(cli: &Cli, a: &HierarchyArgs) -> Result<()> {
    let graphs = scaled(read_dataset(&a.input)?, a.feature_scale)?;
    let hs = build_all(&graphs, &q_values(&a.q), a.agg, cli.seed)?;
    if is_jsonl(&a.out) {
        write_atomic(&a.out, io::hierarchies_to_jsonl(&hs).as_bytes())?;
        info!("wrote {} hierarchies to {}", hs.len(), a.out.display());
        return write_manifest(
            cli,
            &manifest_path(&a.out, false),
            std::slice::from_ref(&a.out),
        );
    }
    let [h] = hs.as_slice() else {
        return Err(usage(format!(
            "{} holds {} graphs; use a .jsonl output for datasets",
            a.input.display(),
            hs.len()
        )));
    };
    let mut written = Vec::new();
    for (name, text) in io::hierarchy_dir_files(h) {
        let path = a.out.join(name);
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
    }
    info!(
        "levels: {:?}",
        h.levels.iter().map(Graph::n).collect::<Vec<_>>()
    );
    write_manifest(cli, &manifest_path(&a.out, true), &written)
}

fn select(cli: &Cli, a: &SelectQArgs) -> Result<()> {
    let grid = log_grid(a.grid_min, a.grid_max, a.grid_points).map_err(|e| usage(e.to_string()))?;
    let graphs = read_dataset(&a.input)?;
    let curve = select_q_many(&graphs, &grid, a.phi)?;
    let summary_path = a.out.with_extension("json");
    write_atomic(&a.out, io::curve_csv(&curve).as_bytes())?;
    write_json(&summary_path, &CurveSummary::from(&curve))?;
    info!("q* = {}", curve.q_star);
    write_manifest(
        cli,
        &manifest_path(&a.out, false),
        &[a.out.clone(), summary_path],
    )
}

#[derive(Serialize)]
struct EstimateReport {
    q: io::QValue,
    n: usize,
    m: usize,
    expected_nodes_degree: f64,
    expected_nodes_spectral: f64,
    expected_edges: f64,
    r: f64,
    cost: CostEstimate,
}

fn estimate(cli: &Cli, a: &EstimateArgs) -> Result<()> {
    let g = read_graph(&a.input)?;
    let q = a.q.0;
    let report = EstimateReport {
        q: io::QValue(q),
        n: g.n(),
        m: g.m(),
        expected_nodes_degree: expected_coarse_nodes(&g, q, NodeEstimate::Degree)?,
        expected_nodes_spectral: expected_coarse_nodes(&g, q, NodeEstimate::Spectral)?,
        expected_edges: expected_coarse_edges(&g, q)?,
        r: reduction_ratio(&g, q)?,
        cost: cost_model(CostParams {
            n: g.n(),
            m: g.m(),
            f_v: g.node_feature_dim(),
            f_e: g.edge_feature_dim(),
            o: a.hidden,
            t: a.layers,
            mlp_depth: a.linear_per_layer,
            n_levels: a.levels,
            q,
            d_bar: g.mean_degree(),
        })?,
    };
    write_json(&a.out, &report)?;
    write_manifest(
        cli,
        &manifest_path(&a.out, false),
        std::slice::from_ref(&a.out),
    )
}

/// Labelled hierarchies from either source, validated against `--q`.
fn load_source(s: &SourceArgs, seed: u64) -> Result<Vec<(Hierarchy, usize)>> {
    let qs = q_values(&s.q);
    let hs = match (&s.data, &s.hierarchies) {
        (Some(data), _) => {
            if qs.is_empty() {
                return Err(usage("--q is required with --data"));
            }
            let graphs = scaled(read_dataset(data)?, s.feature_scale)?;
            build_all(&graphs, &qs, s.agg, seed)?
        }
        (None, Some(path)) => {
            if s.feature_scale != 1.0 {
                return Err(usage(
                    "--feature-scale applies to --data; scale when running `kfh hierarchy`",
                ));
            }
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let hs = io::hierarchies_from_jsonl(&text)
                .with_context(|| format!("reading {}", path.display()))?;
            if let Some(bad) = hs.iter().find(|h| !qs.is_empty() && h.q_sequence != qs) {
                bail!(
                    "hierarchy q sequence {:?} does not match --q {:?}",
                    bad.q_sequence,
                    qs
                );
            }
            hs
        }
        (None, None) => return Err(usage("one of --data or --hierarchies is required")),
    };
    if hs.is_empty() {
        bail!("dataset is empty");
    }
    let depth = hs[0].depth();
    if hs.iter().any(|h| h.depth() != depth) {
        bail!("hierarchies have different depths");
    }
    hs.into_iter()
        .enumerate()
        .map(|(i, h)| match h.label() {
            Some(l) => Ok((h, l)),
            None => bail!("graph {i} has no label"),
        })
        .collect()
}

#[derive(Serialize)]
struct TrainSummary {
    epochs_run: usize,
    best_epoch: usize,
    test: Evaluation,
    num_params: usize,
    train_seconds: f64,
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let data = load_source(&a.source, cli.seed)?;
    let first = &data[0].0;
    if a.layers.len() != first.depth() {
        return Err(usage(format!(
            "--layers has {} entries for {} levels",
            a.layers.len(),
            first.depth()
        )));
    }
    let max_label = data.iter().map(|d| d.1).max().unwrap_or(0);
    let config = ModelConfig {
        node_features: first.levels[0].node_feature_dim(),
        edge_features: first.levels[0].edge_feature_dim(),
        hidden: a.hidden,
        classes: a.classes.unwrap_or(max_label + 1),
        layers_per_level: a.layers.clone(),
        linear_per_layer: a.linear_per_layer,
        mlp_layers: a.mlp_layers,
    };
    let p0 = ModelParams::init(config, cli.seed).map_err(|e| usage(e.to_string()))?;
    let split = Split::random(data.len(), a.train_frac, a.val_frac, cli.seed)?;
    let cfg = TrainConfig {
        batch_size: a.batch_size,
        learning_rate: a.lr,
        weight_decay: a.weight_decay,
        seed: cli.seed,
        max_epochs: a.epochs,
        early_stop_patience: a.patience,
        early_stop_min_delta: a.min_delta,
        optimizer: a.optimizer,
        fixed_epochs: a.fixed_epochs,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let start = Instant::now();
    let out = train(&data, &split, &cfg, &p0)?;
    let secs = start.elapsed().as_secs_f64();
    info!(
        "test accuracy {:.4} after {} epochs",
        out.test.accuracy,
        out.history.len()
    );

    let files: Vec<PathBuf> = [
        "checkpoint.json",
        "metrics.csv",
        "split.json",
        "summary.json",
    ]
    .iter()
    .map(|f| a.out.join(f))
    .collect();
    write_json(&files[0], &Checkpoint::from(&out.params))?;
    write_atomic(&files[1], metrics_csv(&out.history).as_bytes())?;
    write_json(&files[2], &split)?;
    write_json(
        &files[3],
        &TrainSummary {
            epochs_run: out.history.len(),
            best_epoch: out.best_epoch,
            test: out.test,
            num_params: out.params.num_params(),
            train_seconds: secs,
        },
    )?;
    write_manifest(cli, &manifest_path(&a.out, true), &files)
}

#[derive(Serialize)]
struct EvalReport {
    n: usize,
    loss: f64,
    accuracy: f64,
}

fn eval_cmd(cli: &Cli, a: &EvalArgs) -> Result<()> {
    let text = fs::read_to_string(&a.checkpoint)
        .with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let ckpt: Checkpoint = serde_json::from_str(&text).context("parsing checkpoint")?;
    let params = ckpt.into_params()?;
    let data = load_source(&a.source, cli.seed)?;
    let indices: Vec<usize> = match &a.split {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let split: Split = serde_json::from_str(&text).context("parsing split")?;
            match a.subset {
                Subset::Train => split.train,
                Subset::Val => split.val,
                Subset::Test => split.test,
            }
        }
        None => (0..data.len()).collect(),
    };
    if let Some(&i) = indices.iter().find(|&&i| i >= data.len()) {
        bail!("split index {i} out of range for {} graphs", data.len());
    }
    let e = evaluate(&data, &indices, &params)?;
    write_json(
        &a.out,
        &EvalReport {
            n: indices.len(),
            loss: e.loss,
            accuracy: e.accuracy,
        },
    )?;
    write_manifest(
        cli,
        &manifest_path(&a.out, false),
        std::slice::from_ref(&a.out),
    )
}
