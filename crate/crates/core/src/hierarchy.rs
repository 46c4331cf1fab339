//! Multi-level coarsening driven by random forests.
//!
//! Partition matrices are oriented coarse × fine, so `P · X` maps fine-level
//! rows (nodes) to coarse-level rows. Level `ℓ` of a [`Hierarchy`] always
//! takes its features straight from the original graph through the base
//! partition `P^(0,ℓ)`; the step matrices `P^(ℓ-1,ℓ)` are derived from the
//! base partitions through the right inverse.

use nalgebra::{Cholesky, DMatrix};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{check_q, Error, Result};
use crate::forest::{components, reboot_with, sample_forest_with, Partition, RootedForest};
use crate::graph::Graph;
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggMode {
    #[default]
    Mean,
    Sum,
}

impl std::str::FromStr for AggMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(AggMode::Mean),
            "sum" => Ok(AggMode::Sum),
            other => Err(Error::Parse(format!("unknown aggregation mode {other:?}"))),
        }
    }
}

/// Nonnegative coarse × fine matrix stored as sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct PartitionMatrix {
    cols: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl PartitionMatrix {
    /// Builds from sparse rows; entries must be finite and nonnegative.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for row in &rows {
            for &(c, v) in row {
                if c >= cols {
                    return Err(Error::dim(
                        "partition matrix",
                        format!("column {c} >= {cols}"),
                    ));
                }
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "partition matrix entry {v} is not a nonnegative finite value"
                    )));
                }
            }
        }
        Ok(PartitionMatrix { cols, rows })
    }

    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sparse = vec![Vec::new(); rows];
        for &(r, c, v) in triplets {
            if r >= rows {
                return Err(Error::dim("partition matrix", format!("row {r} >= {rows}")));
            }
            sparse[r].push((c, v));
        }
        for row in &mut sparse {
            row.sort_by_key(|&(c, _)| c);
        }
        PartitionMatrix::from_rows(cols, sparse)
    }

    pub fn identity(n: usize) -> Self {
        PartitionMatrix {
            cols: n,
            rows: (0..n).map(|i| vec![(i, 1.0)]).collect(),
        }
    }

    /// Hard membership matrix of `p`; mean mode scales row `c` by `1/|c|`.
    pub fn from_partition(p: &Partition, mode: AggMode) -> Self {
        let sizes = p.sizes();
        let mut rows = vec![Vec::new(); p.k()];
        for (v, &c) in p.assignment().iter().enumerate() {
            let w = match mode {
                AggMode::Mean => 1.0 / sizes[c] as f64,
                AggMode::Sum => 1.0,
            };
            rows[c].push((v, w));
        }
        PartitionMatrix { cols: p.n(), rows }
    }

    /// Block-diagonal stack of `parts`.
    pub fn block_diagonal(parts: &[&PartitionMatrix]) -> Self {
        let mut rows = Vec::with_capacity(parts.iter().map(|p| p.nrows()).sum());
        let mut cols = 0;
        for p in parts {
            rows.extend(
                p.rows
                    .iter()
                    .map(|r| r.iter().map(|&(c, v)| (c + cols, v)).collect()),
            );
            cols += p.cols;
        }
        PartitionMatrix { cols, rows }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |&(c, v)| (r, c, v)))
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows(), self.cols);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                d[(r, c)] += v;
            }
        }
        d
    }

    /// `P · H`.
    pub fn apply(&self, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if h.nrows() != self.cols {
            return Err(Error::dim(
                "partition apply",
                format!(
                    "matrix has {} rows, partition has {} columns",
                    h.nrows(),
                    self.cols
                ),
            ));
        }
        let mut out = DMatrix::zeros(self.nrows(), h.ncols());
        if self.cols == 0 || self.rows.is_empty() {
            return Ok(out);
        }
        for (src, dst) in h
            .as_slice()
            .chunks_exact(self.cols)
            .zip(out.as_mut_slice().chunks_exact_mut(self.rows.len()))
        {
            for (d, row) in dst.iter_mut().zip(&self.rows) {
                *d = row.iter().map(|&(c, v)| v * src[c]).sum();
            }
        }
        Ok(out)
    }

    /// `Pᵀ · G`, used when back-propagating through [`PartitionMatrix::apply`].
    pub fn apply_transpose(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if g.nrows() != self.nrows() {
            return Err(Error::dim(
                "partition transpose apply",
                format!(
                    "matrix has {} rows, partition has {} rows",
                    g.nrows(),
                    self.nrows()
                ),
            ));
        }
        let mut out = DMatrix::zeros(self.cols, g.ncols());
        if self.cols == 0 || self.rows.is_empty() {
            return Ok(out);
        }
        for (src, dst) in g
            .as_slice()
            .chunks_exact(self.rows.len())
            .zip(out.as_mut_slice().chunks_exact_mut(self.cols))
        {
            for (&x, row) in src.iter().zip(&self.rows) {
                for &(c, v) in row {
                    dst[c] += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `Pᵀ (P Pᵀ)⁻¹`, a fine × coarse matrix with `P · R = I`.
    pub fn right_inverse(&self) -> Result<DMatrix<f64>> {
        let k = self.nrows();
        // Gram matrix P Pᵀ through column occupancy.
        let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.cols];
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                by_col[c].push((r, v));
            }
        }
        let mut gram = DMatrix::<f64>::zeros(k, k);
        for col in &by_col {
            for &(a, va) in col {
                for &(b, vb) in col {
                    gram[(a, b)] += va * vb;
                }
            }
        }
        let diagonal = (0..k).all(|a| (0..k).all(|b| a == b || gram[(a, b)] == 0.0));
        let gram_inv = if diagonal {
            let mut inv = DMatrix::zeros(k, k);
            for a in 0..k {
                if gram[(a, a)] <= 0.0 {
                    return Err(Error::Singular("partition right inverse: empty row"));
                }
                inv[(a, a)] = 1.0 / gram[(a, a)];
            }
            inv
        } else {
            Cholesky::new(gram)
                .ok_or(Error::Singular(
                    "partition right inverse: P Pᵀ is not positive definite",
                ))?
                .inverse()
        };
        let mut r = DMatrix::zeros(self.cols, k);
        for (row_idx, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                for b in 0..k {
                    r[(c, b)] += v * gram_inv[(row_idx, b)];
                }
            }
        }
        Ok(r)
    }
}

/// `P^(i,j) = P^(0,j) · rightinv(P^(0,i))`, mapping level `i` to level `j`.
pub fn compose_partitions(
    p_0i: &PartitionMatrix,
    p_0j: &PartitionMatrix,
) -> Result<PartitionMatrix> {
    if p_0i.ncols() != p_0j.ncols() {
        return Err(Error::dim(
            "compose partitions",
            format!("{} vs {} fine columns", p_0i.ncols(), p_0j.ncols()),
        ));
    }
    let rinv = p_0i.right_inverse()?;
    let ki = p_0i.nrows();
    let mut rows = Vec::with_capacity(p_0j.nrows());
    for row in &p_0j.rows {
        let mut dense = vec![0.0; ki];
        for &(v, w) in row {
            for (a, acc) in dense.iter_mut().enumerate() {
                *acc += w * rinv[(v, a)];
            }
        }
        rows.push(
            dense
                .into_iter()
                .enumerate()
                .filter(|&(_, x)| x != 0.0)
                .collect(),
        );
    }
    // Soft entries of a general composition can be slightly negative from
    // round-off; the algebra keeps them as computed.
    Ok(PartitionMatrix { cols: ki, rows })
}

pub fn project_features(p: &PartitionMatrix, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    p.apply(h)
}

/// Collapses each component of `p` into a supernode. Node features are
/// `P · X`; coarse edges join components linked by at least one fine edge and
/// carry the mean (or sum) of those fine edges' features.
pub fn coarsen(g: &Graph, p: &Partition, mode: AggMode) -> Result<(Graph, PartitionMatrix)> {
    if p.n() != g.n() {
        return Err(Error::dim(
            "coarsen",
            format!("partition covers {} nodes, graph has {}", p.n(), g.n()),
        ));
    }
    let pm = PartitionMatrix::from_partition(p, mode);
    let x = pm.apply(g.node_features())?;
    let fe = g.edge_feature_dim();
    let mut crossing: BTreeMap<(usize, usize), (Vec<f64>, usize)> = BTreeMap::new();
    let a = p.assignment();
    for (k, &(i, j)) in g.edges().iter().enumerate() {
        let (ci, cj) = (a[i], a[j]);
        if ci == cj {
            continue;
        }
        let entry = crossing
            .entry((ci.min(cj), ci.max(cj)))
            .or_insert_with(|| (vec![0.0; fe], 0));
        for c in 0..fe {
            entry.0[c] += g.edge_features()[(k, c)];
        }
        entry.1 += 1;
    }
    let edges: Vec<(usize, usize)> = crossing.keys().copied().collect();
    let mut ef = DMatrix::zeros(edges.len(), fe);
    for (r, (sum, count)) in crossing.values().enumerate() {
        let scale = match mode {
            AggMode::Mean => 1.0 / *count as f64,
            AggMode::Sum => 1.0,
        };
        for c in 0..fe {
            ef[(r, c)] = sum[c] * scale;
        }
    }
    let coarse = Graph::new(&edges, x, Some(ef), g.label())?;
    Ok((coarse, pm))
}

#[derive(Clone, Debug)]
pub struct Hierarchy {
    pub q_sequence: Vec<f64>,
    pub levels: Vec<Graph>,
    /// `step_partitions[k]` maps `levels[k]` to `levels[k + 1]`.
    pub step_partitions: Vec<PartitionMatrix>,
    /// `base_partitions[k]` maps the original graph to `levels[k]`.
    pub base_partitions: Vec<PartitionMatrix>,
    pub agg_mode: AggMode,
}

impl Hierarchy {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn original_n(&self) -> usize {
        self.base_partitions[0].ncols()
    }

    pub fn label(&self) -> Option<usize> {
        self.levels[0].label()
    }

    /// Largest `|P^(k,k+1) P^(0,k) − P^(0,k+1)|` entry over all steps.
    pub fn composition_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, step) in self.step_partitions.iter().enumerate() {
            let lhs = step.to_dense() * self.base_partitions[k].to_dense();
            let rhs = self.base_partitions[k + 1].to_dense();
            worst = worst.max((lhs - rhs).amax());
        }
        worst
    }

    /// Checks level/partition dimension chaining.
    pub fn validate(&self) -> Result<()> {
        let nq = self.levels.len();
        if nq == 0
            || self.q_sequence.len() != nq
            || self.base_partitions.len() != nq
            || self.step_partitions.len() + 1 != nq
        {
            return Err(Error::dim("hierarchy", "inconsistent level counts"));
        }
        let n0 = self.base_partitions[0].ncols();
        for (k, level) in self.levels.iter().enumerate() {
            let base = &self.base_partitions[k];
            if base.nrows() != level.n() || base.ncols() != n0 {
                return Err(Error::dim("hierarchy", format!("base partition {k} shape")));
            }
        }
        for (k, step) in self.step_partitions.iter().enumerate() {
            if step.ncols() != self.levels[k].n() || step.nrows() != self.levels[k + 1].n() {
                return Err(Error::dim("hierarchy", format!("step partition {k} shape")));
            }
        }
        Ok(())
    }
}

/// Builds a hierarchy for a strictly decreasing `q_sequence`.
///
/// The first level uses a forest drawn at `q_sequence[0]` (`+inf` gives the
/// original graph). Each following forest is a [`reboot`](crate::forest::reboot)
/// of the previous one on the original graph. The level partition is the join
/// of the new forest's components with the previous level's partition, so
/// consecutive levels are nested and the step matrices compose exactly.
pub fn build_hierarchy(
    g: &Graph,
    q_sequence: &[f64],
    mode: AggMode,
    seed: u64,
) -> Result<Hierarchy> {
    if q_sequence.is_empty() {
        return Err(Error::InvalidArgument("q sequence is empty".into()));
    }
    for &q in q_sequence {
        check_q(q)?;
    }
    if q_sequence.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidArgument(format!(
            "q sequence must be strictly decreasing: {q_sequence:?}"
        )));
    }
    let mut rng = seeded(seed);
    let mut forest: RootedForest = sample_forest_with(g, q_sequence[0], &mut rng)?;
    let mut partition = components(&forest)?;

    let mut levels = Vec::with_capacity(q_sequence.len());
    let mut base_partitions = Vec::with_capacity(q_sequence.len());
    let mut step_partitions = Vec::with_capacity(q_sequence.len().saturating_sub(1));
    let (level, base) = coarsen(g, &partition, mode)?;
    levels.push(level);
    base_partitions.push(base);

    for &q in &q_sequence[1..] {
        forest = reboot_with(g, &forest, q, &mut rng)?;
        partition = components(&forest)?.join(&partition)?;
        let (level, base) = coarsen(g, &partition, mode)?;
        step_partitions.push(compose_partitions(base_partitions.last().unwrap(), &base)?);
        levels.push(level);
        base_partitions.push(base);
    }

    Ok(Hierarchy {
        q_sequence: q_sequence.to_vec(),
        levels,
        step_partitions,
        base_partitions,
        agg_mode: mode,
    })
}
