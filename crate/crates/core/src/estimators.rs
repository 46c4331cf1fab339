//! Closed-form size and cost estimates for forest coarsening.

use serde::{Deserialize, Serialize};

use crate::error::{check_q, Error, Result};
use crate::graph::Graph;
use crate::qselect::eig_sym;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeEstimate {
    /// `Σ_v q/(q+d_v)`: each node treated as an independent root candidate.
    Degree,
    /// `Σ_i q/(q+μ_i) = tr K(q)`: exact expected root count.
    Spectral,
}

fn ratio(q: f64, x: f64) -> f64 {
    if q.is_infinite() {
        1.0
    } else {
        q / (q + x)
    }
}

pub fn expected_coarse_nodes(g: &Graph, q: f64, mode: NodeEstimate) -> Result<f64> {
    check_q(q)?;
    Ok(match mode {
        NodeEstimate::Degree => (0..g.n()).map(|v| ratio(q, g.degree(v) as f64)).sum(),
        NodeEstimate::Spectral => {
            let (mu, _) = eig_sym(&g.laplacian());
            mu.iter().map(|&m| ratio(q, m.max(0.0))).sum()
        }
    })
}

/// `2q / (2q + d_i + d_j)`.
pub fn cut_probability(d_i: usize, d_j: usize, q: f64) -> Result<f64> {
    check_q(q)?;
    Ok(ratio(2.0 * q, (d_i + d_j) as f64))
}

pub fn expected_coarse_edges(g: &Graph, q: f64) -> Result<f64> {
    check_q(q)?;
    g.edges()
        .iter()
        .map(|&(i, j)| cut_probability(g.degree(i), g.degree(j), q))
        .sum()
}

/// `r(q) = q / (q + d̄)` with `d̄ = 2m/n`; an edgeless graph gives 1.
pub fn reduction_ratio(g: &Graph, q: f64) -> Result<f64> {
    check_q(q)?;
    if g.m() == 0 {
        log::warn!("reduction ratio of an edgeless graph: mean degree is 0, r = 1");
        return Ok(1.0);
    }
    Ok(ratio(q, g.mean_degree()))
}

pub fn reduction_ratio_for(q: f64, d_bar: f64) -> Result<f64> {
    check_q(q)?;
    Ok(ratio(q, d_bar))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub n: usize,
    pub m: usize,
    pub f_v: usize,
    pub f_e: usize,
    /// Hidden width.
    pub o: usize,
    /// Message-passing layers.
    pub t: usize,
    /// Linear maps inside each message-passing layer.
    pub mlp_depth: usize,
    pub n_levels: usize,
    pub q: f64,
    pub d_bar: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostTerm {
    Embedding,
    MessagePassing,
    Pooling,
}

/// Abstract multiply-accumulate counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub embedding_cost: f64,
    pub message_passing_cost: f64,
    pub pooling_cost: f64,
    pub total_cost: f64,
    pub dominant: CostTerm,
    pub r: f64,
    pub params: CostParams,
}

pub fn cost_model(p: CostParams) -> Result<CostEstimate> {
    if p.n == 0 || p.o == 0 || p.t == 0 || p.n_levels == 0 {
        return Err(Error::InvalidArgument(
            "cost model needs n, o, T and N_q of at least 1".into(),
        ));
    }
    if !(p.d_bar >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "invalid mean degree {}",
            p.d_bar
        )));
    }
    let r = reduction_ratio_for(p.q, p.d_bar)?;
    let (n, m, o) = (p.n as f64, p.m as f64, p.o as f64);
    let embedding = r * (n * p.f_v as f64 * o + m * p.f_e as f64 * o);
    let message_passing = p.t as f64 * r * (m * o + n * p.mlp_depth as f64 * o * o);
    let pooling = r * n * o;
    let total = p.n_levels as f64 * (embedding + message_passing + pooling);
    let dominant = if message_passing >= embedding && message_passing >= pooling {
        CostTerm::MessagePassing
    } else if embedding >= pooling {
        CostTerm::Embedding
    } else {
        CostTerm::Pooling
    };
    Ok(CostEstimate {
        embedding_cost: embedding,
        message_passing_cost: message_passing,
        pooling_cost: pooling,
        total_cost: total,
        dominant,
        r,
        params: p,
    })
}
