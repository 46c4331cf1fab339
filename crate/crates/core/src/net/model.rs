//! Forward and reverse passes of the sequential multi-resolution network.
//!
//! Levels are processed in hierarchy order (finest first). At each level a
//! message-passing layer computes
//!
//! ```text
//! a_i = h_i + Σ_{j ∈ N(i)} (h_j + e_ij)
//! h_i' = W_M(… relu(W_1 a_i + b_1) …) + b_M
//! ```
//!
//! Node embeddings move to the next level through the step partition matrix;
//! edge embeddings are re-encoded from each level's aggregated edge features.
//! A mini-batch runs as one disjoint union per level.

use nalgebra::{DMatrix, DVector};

use super::params::{Linear, MessageLayer, ModelParams};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::hierarchy::{Hierarchy, PartitionMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct LevelState {
    pub level_index: usize,
    pub node_embeddings: DMatrix<f64>,
    pub edge_embeddings: DMatrix<f64>,
}

fn relu(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(|x| x.max(0.0))
}

fn column_sums(m: &DMatrix<f64>) -> DVector<f64> {
    let rows = m.nrows();
    DVector::from_iterator(
        m.ncols(),
        m.as_slice()
            .chunks(rows.max(1))
            .map(|c| c.iter().sum())
            .take(m.ncols()),
    )
}

/// Column-major transpose over raw slices; much faster than nalgebra's
/// indexed version for tall matrices.
fn transpose(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let mut out = DMatrix::<f64>::zeros(c, r);
    if r == 0 || c == 0 {
        return out;
    }
    let dst = out.as_mut_slice();
    for (j, col) in m.as_slice().chunks_exact(r).enumerate() {
        for (i, &x) in col.iter().enumerate() {
            dst[i * c + j] = x;
        }
    }
    out
}

/// `H + A · H` over the graph's adjacency. Works on `Hᵀ` so each neighbor
/// adds one contiguous row.
fn self_plus_neighbors(g: &Graph, h: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, o) = (g.n(), h.ncols());
    if n == 0 || o == 0 {
        return h.clone();
    }
    let rows = transpose(h);
    let src = rows.as_slice();
    let mut out = rows.clone();
    for (v, dst) in out.as_mut_slice().chunks_exact_mut(o).enumerate() {
        for &u in g.neighbors(v) {
            for (d, &x) in dst.iter_mut().zip(&src[u * o..(u + 1) * o]) {
                *d += x;
            }
        }
    }
    transpose(&out)
}

/// Sum of incident edge rows per node (`S · H_e`).
fn incident_sum(g: &Graph, he: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (g.n(), g.m());
    let mut out = DMatrix::zeros(n, he.ncols());
    if n == 0 || m == 0 {
        return out;
    }
    for (src, dst) in he
        .as_slice()
        .chunks_exact(m)
        .zip(out.as_mut_slice().chunks_exact_mut(n))
    {
        for (&(i, j), &x) in g.edges().iter().zip(src) {
            dst[i] += x;
            dst[j] += x;
        }
    }
    out
}

/// `Sᵀ · G`: per-edge sum of its endpoints' rows.
fn endpoint_sum(g: &Graph, grad: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m) = (g.n(), g.m());
    let mut out = DMatrix::zeros(m, grad.ncols());
    if n == 0 || m == 0 {
        return out;
    }
    for (src, dst) in grad
        .as_slice()
        .chunks_exact(n)
        .zip(out.as_mut_slice().chunks_exact_mut(m))
    {
        for (d, &(i, j)) in dst.iter_mut().zip(g.edges()) {
            *d = src[i] + src[j];
        }
    }
    out
}

fn check_width(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::dim(
            what,
            format!("expected width {expected}, got {got}"),
        ))
    }
}

fn encode_edges(g: &Graph, p: &ModelParams) -> Result<DMatrix<f64>> {
    match &p.edge_encoder {
        Some(enc) => {
            check_width("edge encoder", enc.fan_in(), g.edge_feature_dim())?;
            Ok(enc.apply(g.edge_features()))
        }
        None => Ok(DMatrix::zeros(g.m(), p.config.hidden)),
    }
}

/// Initial embeddings of a level graph.
pub fn encode(g: &Graph, p: &ModelParams) -> Result<LevelState> {
    check_width(
        "node encoder",
        p.node_encoder.fan_in(),
        g.node_feature_dim(),
    )?;
    Ok(LevelState {
        level_index: 0,
        node_embeddings: p.node_encoder.apply(g.node_features()),
        edge_embeddings: encode_edges(g, p)?,
    })
}

struct LayerTape {
    /// Inputs to each linear map (the first is the aggregate).
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activations of each linear map.
    pre: Vec<DMatrix<f64>>,
}

/// `he = None` stands for all-zero edge embeddings.
fn layer_forward(
    g: &Graph,
    h: &DMatrix<f64>,
    he: Option<&DMatrix<f64>>,
    layer: &MessageLayer,
) -> (DMatrix<f64>, LayerTape) {
    let mut x = self_plus_neighbors(g, h);
    if let Some(he) = he {
        x += incident_sum(g, he);
    }
    let mut tape = LayerTape {
        inputs: Vec::with_capacity(layer.maps.len()),
        pre: Vec::with_capacity(layer.maps.len()),
    };
    let last = layer.maps.len().saturating_sub(1);
    for (k, map) in layer.maps.iter().enumerate() {
        let z = map.apply(&x);
        // The last map has no activation, so its pre-activation is not kept.
        let (next, pre) = if k < last {
            (relu(&z), z)
        } else {
            (z, DMatrix::zeros(0, 0))
        };
        tape.inputs.push(std::mem::replace(&mut x, next));
        tape.pre.push(pre);
    }
    (x, tape)
}

/// Returns `dH` and, when `edges` is set, `dH_e`; accumulates map gradients
/// into `grads`.
fn layer_backward(
    g: &Graph,
    layer: &MessageLayer,
    tape: &LayerTape,
    mut grad: DMatrix<f64>,
    grads: &mut MessageLayer,
    edges: bool,
) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let last = layer.maps.len().saturating_sub(1);
    for k in (0..layer.maps.len()).rev() {
        if k < last {
            grad.zip_apply(&tape.pre[k], |g, z| {
                if z <= 0.0 {
                    *g = 0.0
                }
            });
        }
        grads.maps[k].weight += transpose(&tape.inputs[k]) * &grad;
        grads.maps[k].bias += column_sums(&grad);
        grad = &grad * layer.maps[k].weight.transpose();
    }
    let d_edges = edges.then(|| endpoint_sum(g, &grad));
    let d_nodes = self_plus_neighbors(g, &grad);
    (d_nodes, d_edges)
}

pub fn message_layer(g: &Graph, state: &LevelState, layer: &MessageLayer) -> Result<LevelState> {
    if state.node_embeddings.nrows() != g.n() || state.edge_embeddings.nrows() != g.m() {
        return Err(Error::dim(
            "message layer",
            "state does not match the level graph",
        ));
    }
    let (h, _) = layer_forward(
        g,
        &state.node_embeddings,
        Some(&state.edge_embeddings),
        layer,
    );
    Ok(LevelState {
        level_index: state.level_index,
        node_embeddings: h,
        edge_embeddings: state.edge_embeddings.clone(),
    })
}

/// Moves node embeddings through `p_step` and re-encodes edges of `next_graph`.
pub fn propagate_level(
    p_step: &PartitionMatrix,
    state: &LevelState,
    next_graph: &Graph,
    params: &ModelParams,
) -> Result<LevelState> {
    if p_step.nrows() != next_graph.n() {
        return Err(Error::dim(
            "propagate level",
            format!(
                "partition has {} rows, next level has {} nodes",
                p_step.nrows(),
                next_graph.n()
            ),
        ));
    }
    Ok(LevelState {
        level_index: state.level_index + 1,
        node_embeddings: p_step.apply(&state.node_embeddings)?,
        edge_embeddings: encode_edges(next_graph, params)?,
    })
}

/// Column means, accumulated incrementally so identical rows pool exactly.
pub fn global_mean_pool(h: &DMatrix<f64>) -> DVector<f64> {
    let mut mean = DVector::zeros(h.ncols());
    for (k, row) in h.row_iter().enumerate() {
        let w = 1.0 / (k + 1) as f64;
        for (m, &x) in mean.iter_mut().zip(row.iter()) {
            *m += (x - *m) * w;
        }
    }
    mean
}

/// Hierarchies of one mini-batch stacked level by level into disjoint unions,
/// so every dense map runs once per batch.
struct Stacked {
    levels: Vec<Graph>,
    steps: Vec<PartitionMatrix>,
    /// Row offsets of each hierarchy in the last level, length `batch + 1`.
    segments: Vec<usize>,
}

fn stack(hs: &[&Hierarchy], p: &ModelParams) -> Result<Stacked> {
    let depth = p.levels.len();
    if let Some(h) = hs.iter().find(|h| h.depth() != depth) {
        return Err(Error::dim(
            "forward",
            format!("hierarchy has {} levels, model has {depth}", h.depth()),
        ));
    }
    let levels = (0..depth)
        .map(|l| {
            let parts: Vec<&Graph> = hs.iter().map(|h| &h.levels[l]).collect();
            Graph::disjoint_union(&parts)
        })
        .collect::<Result<Vec<_>>>()?;
    let steps = (0..depth.saturating_sub(1))
        .map(|l| {
            let parts: Vec<&PartitionMatrix> = hs.iter().map(|h| &h.step_partitions[l]).collect();
            PartitionMatrix::block_diagonal(&parts)
        })
        .collect();
    let mut segments = vec![0];
    for h in hs {
        segments.push(segments.last().unwrap() + h.levels[depth - 1].n());
    }
    Ok(Stacked {
        levels,
        steps,
        segments,
    })
}

struct Tape {
    layers: Vec<Vec<LayerTape>>,
    readout_inputs: Vec<DMatrix<f64>>,
    readout_pre: Vec<DMatrix<f64>>,
}

/// Logits of every stacked hierarchy, one row each.
fn forward_tape(b: &Stacked, p: &ModelParams) -> Result<(DMatrix<f64>, Tape)> {
    let mut tape = Tape {
        layers: Vec::with_capacity(b.levels.len()),
        readout_inputs: Vec::new(),
        readout_pre: Vec::new(),
    };
    check_width(
        "node encoder",
        p.node_encoder.fan_in(),
        b.levels[0].node_feature_dim(),
    )?;
    let mut h = p.node_encoder.apply(b.levels[0].node_features());
    for (l, graph) in b.levels.iter().enumerate() {
        if l > 0 {
            h = b.steps[l - 1].apply(&h)?;
        }
        let he = match p.edge_encoder {
            Some(_) => Some(encode_edges(graph, p)?),
            None => None,
        };
        let mut tapes = Vec::with_capacity(p.levels[l].len());
        for layer in &p.levels[l] {
            let (next, t) = layer_forward(graph, &h, he.as_ref(), layer);
            h = next;
            tapes.push(t);
        }
        tape.layers.push(tapes);
    }
    let mut y = DMatrix::zeros(b.segments.len() - 1, h.ncols());
    for (r, w) in b.segments.windows(2).enumerate() {
        y.row_mut(r)
            .copy_from(&global_mean_pool(&h.rows(w[0], w[1] - w[0]).into_owned()).transpose());
    }
    let last = p.readout.len() - 1;
    for (k, map) in p.readout.iter().enumerate() {
        let z = map.apply(&y);
        let next = if k < last { relu(&z) } else { z.clone() };
        tape.readout_inputs.push(std::mem::replace(&mut y, next));
        tape.readout_pre.push(z);
    }
    Ok((y, tape))
}

/// Class logits for each hierarchy, one row per input.
pub fn forward_batch(hs: &[&Hierarchy], p: &ModelParams) -> Result<DMatrix<f64>> {
    if hs.is_empty() {
        return Ok(DMatrix::zeros(0, p.config.classes));
    }
    forward_tape(&stack(hs, p)?, p).map(|(y, _)| y)
}

/// Class logits for one hierarchy.
pub fn forward(h: &Hierarchy, p: &ModelParams) -> Result<DVector<f64>> {
    forward_batch(&[h], p).map(|y| y.row(0).transpose())
}

fn accumulate_linear(grad: &mut Linear, input: &DMatrix<f64>, upstream: &DMatrix<f64>) {
    grad.weight += transpose(input) * upstream;
    grad.bias += column_sums(upstream);
}

fn mask_relu(grad: &mut DMatrix<f64>, pre: &DMatrix<f64>) {
    grad.zip_apply(pre, |g, z| {
        if z <= 0.0 {
            *g = 0.0
        }
    });
}

fn backward(
    b: &Stacked,
    p: &ModelParams,
    tape: &Tape,
    d_logits: DMatrix<f64>,
    grads: &mut ModelParams,
) {
    let mut g = d_logits;
    let last = p.readout.len() - 1;
    for k in (0..p.readout.len()).rev() {
        if k < last {
            mask_relu(&mut g, &tape.readout_pre[k]);
        }
        accumulate_linear(&mut grads.readout[k], &tape.readout_inputs[k], &g);
        g = &g * p.readout[k].weight.transpose();
    }
    let n_final = *b.segments.last().unwrap();
    let mut d_nodes = DMatrix::zeros(n_final, g.ncols());
    for (r, w) in b.segments.windows(2).enumerate() {
        let scale = 1.0 / (w[1] - w[0]) as f64;
        for v in w[0]..w[1] {
            for c in 0..g.ncols() {
                d_nodes[(v, c)] = g[(r, c)] * scale;
            }
        }
    }

    for l in (0..b.levels.len()).rev() {
        let graph = &b.levels[l];
        let edges = p.edge_encoder.is_some();
        let mut d_edges = DMatrix::zeros(if edges { graph.m() } else { 0 }, p.config.hidden);
        for (i, layer) in p.levels[l].iter().enumerate().rev() {
            let (dn, de) = layer_backward(
                graph,
                layer,
                &tape.layers[l][i],
                d_nodes,
                &mut grads.levels[l][i],
                edges,
            );
            d_nodes = dn;
            if let Some(de) = de {
                d_edges += de;
            }
        }
        if let (Some(grad_enc), true) = (grads.edge_encoder.as_mut(), graph.m() > 0) {
            accumulate_linear(grad_enc, graph.edge_features(), &d_edges);
        }
        if l > 0 {
            d_nodes = b.steps[l - 1]
                .apply_transpose(&d_nodes)
                .expect("shapes checked in forward");
        }
    }
    accumulate_linear(
        &mut grads.node_encoder,
        b.levels[0].node_features(),
        &d_nodes,
    );
}

fn softmax(z: &DVector<f64>) -> DVector<f64> {
    let max = z.max();
    let e = z.map(|x| (x - max).exp());
    let s = e.sum();
    e / s
}

/// Softmax cross-entropy of one logit vector.
pub fn cross_entropy(logits: &DVector<f64>, label: usize) -> f64 {
    let max = logits.max();
    let lse = max + logits.map(|x| (x - max).exp()).sum().ln();
    lse - logits[label]
}

/// Logit gradients below this are set to zero. Left alone they decay into
/// subnormals through the backward pass, which is many times slower, while
/// their effect on any optimizer step is far below f64 resolution.
const GRAD_FLUSH: f64 = 1e-150;

#[derive(Clone, Debug)]
pub struct BatchResult {
    pub loss: f64,
    pub correct: usize,
    pub grads: ModelParams,
}

pub(crate) fn argmax(v: &DVector<f64>) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| {
            if x > best.1 {
                (i, x)
            } else {
                best
            }
        })
        .0
}

/// Mean cross-entropy over the batch and its gradient for every parameter.
pub fn loss_and_grad(batch: &[(&Hierarchy, usize)], p: &ModelParams) -> Result<BatchResult> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if let Some(&(_, label)) = batch.iter().find(|(_, l)| *l >= p.config.classes) {
        return Err(Error::InvalidLabel {
            label,
            classes: p.config.classes,
        });
    }
    let hs: Vec<&Hierarchy> = batch.iter().map(|(h, _)| *h).collect();
    let stacked = stack(&hs, p)?;
    let (logits, tape) = forward_tape(&stacked, p)?;
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut correct = 0;
    let mut d_logits = DMatrix::zeros(logits.nrows(), logits.ncols());
    for (r, &(_, label)) in batch.iter().enumerate() {
        let z = logits.row(r).transpose();
        loss += cross_entropy(&z, label) * scale;
        correct += usize::from(argmax(&z) == label);
        let mut d = softmax(&z);
        d[label] -= 1.0;
        d.apply(|x| {
            if x.abs() < GRAD_FLUSH {
                *x = 0.0
            }
        });
        d_logits.row_mut(r).copy_from(&(d * scale).transpose());
    }
    let mut grads = p.zeros_like();
    backward(&stacked, p, &tape, d_logits, &mut grads);
    Ok(BatchResult {
        loss,
        correct,
        grads,
    })
}
