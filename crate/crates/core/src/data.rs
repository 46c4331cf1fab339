//! Seeded synthetic graph-classification datasets.

use std::collections::{BTreeSet, HashMap};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::qselect::eig_sym;
use crate::rng::{derive_seed, seeded, Rng};

pub const MAX_NODES: usize = 500;
/// Degree of the regular graph inside each community block.
pub const BLOCK_DEGREE: usize = 10;
/// Smallest block in the community task.
pub const MIN_BLOCK: usize = BLOCK_DEGREE + 2;
/// Edges from each node to every other block.
pub const CROSS_DEGREE: usize = 1;
pub const FEATURE_NOISE_STD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    CycleVsTree,
    CommunityCount,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cycle-vs-tree" => Ok(Task::CycleVsTree),
            "community-count" => Ok(Task::CommunityCount),
            other => Err(Error::InvalidArgument(format!("unknown task {other:?}"))),
        }
    }
}

/// Block sizes `s` with `k * s` inside `lo..=hi`.
fn block_sizes(k: usize, lo: usize, hi: usize) -> (usize, usize) {
    (lo.div_ceil(k).max(MIN_BLOCK), hi / k)
}

fn check_range(cfg: &GenConfig) -> Result<()> {
    let bad = || {
        Err(Error::InvalidArgument(format!(
            "size range {}..={} is degenerate for {:?} (nodes up to {MAX_NODES})",
            cfg.min_nodes, cfg.max_nodes, cfg.task
        )))
    };
    if cfg.min_nodes > cfg.max_nodes || cfg.max_nodes > MAX_NODES {
        return bad();
    }
    match cfg.task {
        Task::CycleVsTree if cfg.min_nodes < 4 => bad(),
        Task::CommunityCount
            if [2, 3].iter().any(|&k| {
                let (lo, hi) = block_sizes(k, cfg.min_nodes, cfg.max_nodes);
                lo > hi
            }) =>
        {
            bad()
        }
        _ => Ok(()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub task: Task,
    pub n_graphs: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub seed: u64,
}

/// Graph `i` uses its own stream `derive_seed(seed, i)` and label `i % 2`.
pub fn gen_synthetic(cfg: &GenConfig) -> Result<Vec<Graph>> {
    check_range(cfg)?;
    if cfg.n_graphs == 0 {
        return Err(Error::InvalidArgument("n_graphs must be positive".into()));
    }
    (0..cfg.n_graphs)
        .map(|i| {
            let mut rng = seeded(derive_seed(cfg.seed, i as u64));
            let label = i % 2;
            let (n, edges) = match cfg.task {
                Task::CycleVsTree => {
                    let n = rng.random_range(cfg.min_nodes..=cfg.max_nodes);
                    (n, tree_edges(n, label == 1, &mut rng))
                }
                Task::CommunityCount => {
                    let k = label + 2;
                    let (lo, hi) = block_sizes(k, cfg.min_nodes, cfg.max_nodes);
                    let s = rng.random_range(lo..=hi);
                    (k * s, block_edges(s, k, &mut rng))
                }
            };
            let features = degree_features(n, &edges, &mut rng);
            Graph::new(&edges, features, None, Some(label))
        })
        .collect()
}

/// Random recursive tree; with `cycle`, one extra chord between non-adjacent nodes.
fn tree_edges(n: usize, cycle: bool, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = (1..n)
        .map(|i| {
            let parent = order[rng.random_range(0..i)];
            (parent.min(order[i]), parent.max(order[i]))
        })
        .collect();
    if cycle {
        // A tree on >= 4 nodes is never complete, so a free pair exists.
        loop {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            let e = (a.min(b), a.max(b));
            if a != b && !edges.contains(&e) {
                edges.push(e);
                break;
            }
        }
    }
    edges
}

/// `k` blocks of equal size, each a random `BLOCK_DEGREE`-regular graph, plus
/// `CROSS_DEGREE` perfect matchings between every pair of blocks. Every node
/// has degree `BLOCK_DEGREE + (k - 1) * CROSS_DEGREE`.
fn block_edges(s: usize, k: usize, rng: &mut Rng) -> Vec<(usize, usize)> {
    let mut nodes: Vec<usize> = (0..s * k).collect();
    nodes.shuffle(rng);
    let blocks: Vec<&[usize]> = nodes.chunks(s).collect();
    let mut edges = BTreeSet::new();
    for block in &blocks {
        for (a, b) in random_regular_edges(s, BLOCK_DEGREE, rng).expect("block size checked") {
            let (u, v) = (block[a], block[b]);
            edges.insert((u.min(v), u.max(v)));
        }
    }
    for a in 0..k {
        for b in a + 1..k {
            let mut added = 0;
            while added < CROSS_DEGREE {
                let mut target = blocks[b].to_vec();
                target.shuffle(rng);
                let pairs: Vec<_> = blocks[a]
                    .iter()
                    .zip(&target)
                    .map(|(&u, &v)| (u.min(v), u.max(v)))
                    .collect();
                if pairs.iter().all(|e| !edges.contains(e)) {
                    edges.extend(pairs);
                    added += 1;
                }
            }
        }
    }
    edges.into_iter().collect()
}

/// Uniform stub pairing followed by random double-edge switches that remove
/// self-loops and multi-edges. Approximately uniform, which is all the
/// generators need.
pub fn random_regular_edges(n: usize, d: usize, rng: &mut Rng) -> Result<Vec<(usize, usize)>> {
    if d >= n || (n * d) % 2 == 1 {
        return Err(Error::InvalidArgument(format!(
            "no simple {d}-regular graph on {n} nodes"
        )));
    }
    if 2 * d > n - 1 {
        // Dense case: switches rarely find free pairs, so build the complement.
        let sparse: BTreeSet<_> = random_regular_edges(n, n - 1 - d, rng)?
            .into_iter()
            .collect();
        return Ok((0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|e| !sparse.contains(e))
            .collect());
    }
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    stubs.shuffle(rng);
    let mut pairs: Vec<(usize, usize)> = stubs
        .chunks(2)
        .map(|c| (c[0].min(c[1]), c[0].max(c[1])))
        .collect();
    if pairs.is_empty() {
        return Ok(pairs);
    }
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    for &e in &pairs {
        *counts.entry(e).or_default() += 1;
    }
    let is_bad =
        |e: (usize, usize), counts: &HashMap<(usize, usize), usize>| e.0 == e.1 || counts[&e] > 1;
    let mut rounds = 0usize;
    while let Some(i) = pairs.iter().position(|&e| is_bad(e, &counts)) {
        rounds += 1;
        if rounds > 1000 * pairs.len() {
            return Err(Error::InvalidArgument(format!(
                "could not realize a simple {d}-regular graph on {n} nodes"
            )));
        }
        let j = rng.random_range(0..pairs.len());
        let ((a, b), (c, e)) = (pairs[i], pairs[j]);
        let (x, y) = if rng.random_bool(0.5) {
            ((a, c), (b, e))
        } else {
            ((a, e), (b, c))
        };
        let (x, y) = ((x.0.min(x.1), x.0.max(x.1)), (y.0.min(y.1), y.0.max(y.1)));
        let fresh = |p: (usize, usize)| p.0 != p.1 && !counts.contains_key(&p);
        if i == j || !fresh(x) || !fresh(y) || x == y {
            continue;
        }
        for old in [pairs[i], pairs[j]] {
            let c = counts.get_mut(&old).unwrap();
            *c -= 1;
            if *c == 0 {
                counts.remove(&old);
            }
        }
        counts.insert(x, 1);
        counts.insert(y, 1);
        pairs[i] = x;
        pairs[j] = y;
    }
    pairs.sort_unstable();
    Ok(pairs)
}

/// Random `d`-regular graph with a constant unit feature.
pub fn random_regular(n: usize, d: usize, seed: u64) -> Result<Graph> {
    let edges = random_regular_edges(n, d, &mut seeded(seed))?;
    Graph::from_edges(n, &edges)
}

fn degree_features(n: usize, edges: &[(usize, usize)], rng: &mut Rng) -> DMatrix<f64> {
    let mut deg = vec![0.0; n];
    for &(i, j) in edges {
        deg[i] += 1.0;
        deg[j] += 1.0;
    }
    let noise = Normal::new(0.0, FEATURE_NOISE_STD).expect("valid std");
    DMatrix::from_fn(n, 1, |v, _| deg[v] + noise.sample(rng))
}

/// Multiplies every node feature by `factor`, keeping structure and labels.
pub fn scale_node_features(graphs: &[Graph], factor: f64) -> Result<Vec<Graph>> {
    if !factor.is_finite() {
        return Err(Error::NonFinite("feature scale"));
    }
    graphs
        .iter()
        .map(|g| {
            let xe = (g.edge_feature_dim() > 0).then(|| g.edge_features().clone());
            g.with_features(g.node_features() * factor, xe)
        })
        .collect()
}

/// Number of small Laplacian eigenvalues, read off the largest relative gap
/// `μ_{j+1}/μ_j` for `j` in `2..=max_k`.
pub fn spectral_block_count(g: &Graph, max_k: usize) -> usize {
    let (mu, _) = eig_sym(&g.laplacian());
    let mut best = (2, f64::NEG_INFINITY);
    for j in 2..=max_k.min(mu.len().saturating_sub(1)) {
        let ratio = mu[j] / mu[j - 1].max(f64::MIN_POSITIVE);
        if ratio > best.1 {
            best = (j, ratio);
        }
    }
    best.0
}
