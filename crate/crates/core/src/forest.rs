//! Random rooted spanning forests.
//!
//! A forest is drawn from the Kirchhoff distribution
//!
//! ```text
//! P_q(F) ∝ Π_{v root} q/(q+d_v) · Π_{v non-root} 1/(q+d_v)  ∝  q^{|roots|}
//! ```
//!
//! using Wilson's algorithm where each step of the loop-erased walk at `v`
//! stops (making `v` a root) with probability `q/(q+d_v)` and otherwise moves
//! to a uniform neighbour. Walks start from unvisited nodes in ascending index
//! order.
//!
//! [`reboot`] lowers `q` without resampling from scratch. Think of every node
//! as holding a stack of i.i.d. instructions ("root" or "go to neighbour").
//! Thinning each root instruction with probability `q'/q` turns the `q`
//! stacks into `q'` stacks (a dropped root instruction becomes a no-op self
//! loop). Since cycle popping is order independent, the `q'` forest is
//! obtained by keeping retained trees, and re-running Wilson on the demoted
//! trees where each node's current parent pointer is its top instruction,
//! consumed on first visit; everything after that is fresh.

use rand::Rng as _;
use std::collections::HashMap;

use crate::error::{check_q, Error, Result};
use crate::graph::Graph;
use crate::rng::{seeded, Rng};

/// Hard cap on the support size explored by [`enumerate_forests`].
pub const ENUMERATION_NODE_LIMIT: usize = 10;
const ENUMERATION_SUPPORT_LIMIT: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct RootedForest {
    parent: Vec<Option<usize>>,
    q: f64,
}

impl RootedForest {
    /// Wraps raw parent pointers. Use [`RootedForest::validate`] to check them
    /// against a graph.
    pub fn from_parents(parent: Vec<Option<usize>>, q: f64) -> Self {
        RootedForest { parent, q }
    }

    /// Every node is its own root.
    pub fn all_roots(n: usize, q: f64) -> Self {
        RootedForest {
            parent: vec![None; n],
            q,
        }
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn n(&self) -> usize {
        self.parent.len()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.n())
            .filter(|&v| self.parent[v].is_none())
            .collect()
    }

    pub fn root_count(&self) -> usize {
        self.parent.iter().filter(|p| p.is_none()).count()
    }

    /// Checks node count, that every parent edge exists in `g`, and that
    /// parent chains are acyclic.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        if self.n() != g.n() {
            return Err(Error::InvalidForest(format!(
                "forest has {} nodes, graph has {}",
                self.n(),
                g.n()
            )));
        }
        for (v, p) in self.parent.iter().enumerate() {
            if let Some(p) = *p {
                if !g.has_edge(v, p) {
                    return Err(Error::InvalidForest(format!(
                        "parent edge ({v}, {p}) is not in the graph"
                    )));
                }
            }
        }
        self.root_of_all().map(|_| ())
    }

    /// Root reached from each node, or an error if some chain cycles.
    pub fn root_of_all(&self) -> Result<Vec<usize>> {
        const UNSET: usize = usize::MAX;
        let n = self.n();
        let mut root = vec![UNSET; n];
        let mut path = Vec::new();
        for s in 0..n {
            if root[s] != UNSET {
                continue;
            }
            let mut v = s;
            path.clear();
            let r = loop {
                if root[v] != UNSET {
                    break root[v];
                }
                if path.len() > n {
                    return Err(Error::InvalidForest(format!(
                        "parent pointers from node {s} contain a cycle"
                    )));
                }
                path.push(v);
                match self.parent[v] {
                    None => break v,
                    Some(p) if p < n => v = p,
                    Some(p) => {
                        return Err(Error::InvalidForest(format!("parent {p} out of range")))
                    }
                }
            };
            for &u in &path {
                root[u] = r;
            }
        }
        Ok(root)
    }
}

/// Disjoint node groups; component indices are `0..k`, each nonempty.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    assignment: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        let k = assignment.iter().map(|&c| c + 1).max().unwrap_or(0);
        let mut used = vec![false; k];
        for &c in &assignment {
            used[c] = true;
        }
        if used.iter().any(|u| !u) {
            return Err(Error::InvalidArgument(
                "partition component indices must be contiguous".into(),
            ));
        }
        Ok(Partition { assignment, k })
    }

    pub fn identity(n: usize) -> Self {
        Partition {
            assignment: (0..n).collect(),
            k: n,
        }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &c in &self.assignment {
            s[c] += 1;
        }
        s
    }

    /// Whether every component of `self` lies inside one component of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if self.n() != coarser.n() {
            return false;
        }
        let mut image = vec![usize::MAX; self.k];
        for (v, &c) in self.assignment.iter().enumerate() {
            let target = coarser.assignment[v];
            if image[c] == usize::MAX {
                image[c] = target;
            } else if image[c] != target {
                return false;
            }
        }
        true
    }

    /// Finest partition that both `self` and `other` refine: components that
    /// share a node are merged. Components are numbered by first appearance.
    pub fn join(&self, other: &Partition) -> Result<Partition> {
        if self.n() != other.n() {
            return Err(Error::dim(
                "partition join",
                format!("{} vs {} nodes", self.n(), other.n()),
            ));
        }
        // Union-find over self's components, linked through other's components.
        let mut uf: Vec<usize> = (0..self.k).collect();
        fn find(uf: &mut [usize], mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        let mut first_in_other = vec![usize::MAX; other.k];
        for v in 0..self.n() {
            let a = self.assignment[v];
            let b = other.assignment[v];
            if first_in_other[b] == usize::MAX {
                first_in_other[b] = a;
            } else {
                let ra = find(&mut uf, a);
                let rb = find(&mut uf, first_in_other[b]);
                if ra != rb {
                    uf[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut relabel = HashMap::new();
        let assignment = (0..self.n())
            .map(|v| {
                let r = find(&mut uf, self.assignment[v]);
                let next = relabel.len();
                *relabel.entry(r).or_insert(next)
            })
            .collect();
        Partition::new(assignment)
    }
}

/// Partition induced by a forest; component `c` is the tree of the `c`-th
/// smallest root.
pub fn components(f: &RootedForest) -> Result<Partition> {
    let root = f.root_of_all()?;
    let mut index = vec![usize::MAX; f.n()];
    let mut k = 0;
    for (slot, p) in index.iter_mut().zip(&f.parent) {
        if p.is_none() {
            *slot = k;
            k += 1;
        }
    }
    Ok(Partition {
        assignment: root.iter().map(|&r| index[r]).collect(),
        k,
    })
}

#[derive(Clone, Copy)]
enum Step {
    Root,
    To(usize),
}

/// Wilson's algorithm over nodes not yet `in_tree`. `preset[v]`, when set, is
/// used as `v`'s first step and then discarded.
fn wilson(
    g: &Graph,
    q: f64,
    in_tree: &mut [bool],
    parent: &mut [Option<usize>],
    preset: &mut [Option<usize>],
    rng: &mut Rng,
) {
    let n = g.n();
    let mut next = vec![Step::Root; n];
    for start in 0..n {
        let mut u = start;
        while !in_tree[u] {
            let step = match preset[u].take() {
                Some(p) => Step::To(p),
                None => {
                    let nb = g.neighbors(u);
                    let d = nb.len() as f64;
                    if nb.is_empty() || rng.random::<f64>() < q / (q + d) {
                        Step::Root
                    } else {
                        Step::To(nb[rng.random_range(0..nb.len())])
                    }
                }
            };
            next[u] = step;
            match step {
                Step::Root => break,
                Step::To(v) => u = v,
            }
        }
        let mut u = start;
        while !in_tree[u] {
            in_tree[u] = true;
            match next[u] {
                Step::Root => {
                    parent[u] = None;
                    break;
                }
                Step::To(v) => {
                    parent[u] = Some(v);
                    u = v;
                }
            }
        }
    }
}

/// Draws a forest from `P_q`. `q = +inf` returns the all-roots forest.
pub fn sample_forest(g: &Graph, q: f64, seed: u64) -> Result<RootedForest> {
    sample_forest_with(g, q, &mut seeded(seed))
}

pub fn sample_forest_with(g: &Graph, q: f64, rng: &mut Rng) -> Result<RootedForest> {
    check_q(q)?;
    let n = g.n();
    if q.is_infinite() {
        return Ok(RootedForest::all_roots(n, q));
    }
    let mut parent = vec![None; n];
    wilson(
        g,
        q,
        &mut vec![false; n],
        &mut parent,
        &mut vec![None; n],
        rng,
    );
    Ok(RootedForest { parent, q })
}

/// Lowers the resolution of `f` from `f.q()` to `q_prime < f.q()`.
pub fn reboot(g: &Graph, f: &RootedForest, q_prime: f64, seed: u64) -> Result<RootedForest> {
    reboot_with(g, f, q_prime, &mut seeded(seed))
}

pub fn reboot_with(
    g: &Graph,
    f: &RootedForest,
    q_prime: f64,
    rng: &mut Rng,
) -> Result<RootedForest> {
    check_q(q_prime)?;
    if !(q_prime < f.q) {
        return Err(Error::InvalidArgument(format!(
            "reboot needs q' < q, got q' = {q_prime}, q = {}",
            f.q
        )));
    }
    f.validate(g)?;
    let n = g.n();
    let keep = if f.q.is_infinite() {
        0.0
    } else {
        q_prime / f.q
    };
    let mut retained = vec![false; n];
    for (r, p) in retained.iter_mut().zip(&f.parent) {
        if p.is_none() {
            *r = rng.random::<f64>() < keep;
        }
    }
    let root = f.root_of_all()?;
    let mut in_tree: Vec<bool> = root.iter().map(|&r| retained[r]).collect();
    let mut parent = f.parent.clone();
    let mut preset: Vec<Option<usize>> = (0..n)
        .map(|v| if in_tree[v] { None } else { f.parent[v] })
        .collect();
    wilson(g, q_prime, &mut in_tree, &mut parent, &mut preset, rng);
    Ok(RootedForest { parent, q: q_prime })
}

/// Natural log of the unnormalized weight of `f` under `P_q`.
/// Returns `-inf` for forests with edges at `q = +inf`.
pub fn log_forest_weight(g: &Graph, q: f64, f: &RootedForest) -> Result<f64> {
    check_q(q)?;
    f.validate(g)?;
    let mut lw = 0.0;
    for v in 0..g.n() {
        let d = g.degree(v) as f64;
        lw += match (f.parent[v], q.is_infinite()) {
            (None, true) => 0.0,
            (None, false) => q.ln() - (q + d).ln(),
            (Some(_), true) => f64::NEG_INFINITY,
            (Some(_), false) => -(q + d).ln(),
        };
    }
    Ok(lw)
}

/// Unnormalized weight `Π_roots q/(q+d_v) · Π_edges 1/(q+d_child)`.
pub fn forest_weight(g: &Graph, q: f64, f: &RootedForest) -> Result<f64> {
    log_forest_weight(g, q, f).map(f64::exp)
}

/// Exact distribution over rooted spanning forests, by exhaustive search.
#[derive(Clone, Debug)]
pub struct ForestDistribution {
    pub q: f64,
    pub support: Vec<(RootedForest, f64)>,
}

impl ForestDistribution {
    pub fn expected_root_count(&self) -> f64 {
        self.support
            .iter()
            .map(|(f, p)| p * f.root_count() as f64)
            .sum()
    }

    pub fn probability_of(&self, parents: &[Option<usize>]) -> f64 {
        self.support
            .iter()
            .find(|(f, _)| f.parent == parents)
            .map_or(0.0, |(_, p)| *p)
    }
}

/// Enumerates every rooted spanning forest of `g` (at most
/// [`ENUMERATION_NODE_LIMIT`] nodes) with its normalized probability.
pub fn enumerate_forests(g: &Graph, q: f64) -> Result<ForestDistribution> {
    check_q(q)?;
    let n = g.n();
    if n > ENUMERATION_NODE_LIMIT {
        return Err(Error::TooLarge(format!(
            "forest enumeration is limited to {ENUMERATION_NODE_LIMIT} nodes, got {n}"
        )));
    }
    let mut forests = Vec::new();
    let mut parent = vec![None; n];
    enumerate_rec(g, 0, &mut parent, &mut forests)?;

    let logs: Vec<f64> = forests
        .iter()
        .map(|p: &Vec<Option<usize>>| {
            log_forest_weight(g, q, &RootedForest::from_parents(p.clone(), q))
        })
        .collect::<Result<_>>()?;
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    let support = forests
        .into_iter()
        .zip(logs)
        .map(|(p, l)| (RootedForest::from_parents(p, q), (l - max).exp() / total))
        .filter(|(_, p)| *p > 0.0)
        .collect();
    Ok(ForestDistribution { q, support })
}

fn enumerate_rec(
    g: &Graph,
    v: usize,
    parent: &mut Vec<Option<usize>>,
    out: &mut Vec<Vec<Option<usize>>>,
) -> Result<()> {
    if v == g.n() {
        if out.len() >= ENUMERATION_SUPPORT_LIMIT {
            return Err(Error::TooLarge(format!(
                "more than {ENUMERATION_SUPPORT_LIMIT} rooted forests"
            )));
        }
        out.push(parent.clone());
        return Ok(());
    }
    parent[v] = None;
    enumerate_rec(g, v + 1, parent, out)?;
    for &p in g.neighbors(v) {
        // Chase assigned parents from p; reaching v would close a cycle.
        let mut u = p;
        let cycle = loop {
            if u == v {
                break true;
            }
            match (u < v).then(|| parent[u]).flatten() {
                Some(next) => u = next,
                None => break false,
            }
        };
        if !cycle {
            parent[v] = Some(p);
            enumerate_rec(g, v + 1, parent, out)?;
        }
    }
    parent[v] = None;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k2() -> Graph {
        Graph::from_edges(2, &[(0, 1)]).unwrap()
    }

    fn path3() -> Graph {
        Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn infinite_q_gives_identity() {
        let f = sample_forest(&path3(), f64::INFINITY, 1).unwrap();
        assert_eq!(f.root_count(), 3);
        assert_eq!(components(&f).unwrap(), Partition::identity(3));
    }

    #[test]
    fn single_node_is_root() {
        let g = Graph::from_edges(1, &[]).unwrap();
        for seed in 0..10 {
            let f = sample_forest(&g, 0.3, seed).unwrap();
            assert_eq!(f.parents(), &[None]);
            let r = reboot(&g, &f, 0.1, seed).unwrap();
            assert_eq!(r.parents(), &[None]);
        }
    }

    #[test]
    fn rejects_nonpositive_q() {
        assert!(matches!(
            sample_forest(&k2(), 0.0, 1),
            Err(Error::InvalidQ(_))
        ));
        assert!(matches!(
            sample_forest(&k2(), -1.0, 1),
            Err(Error::InvalidQ(_))
        ));
        assert!(sample_forest(&k2(), f64::NAN, 1).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)])
            .unwrap();
        for seed in 0..20 {
            assert_eq!(
                sample_forest(&g, 0.7, seed).unwrap(),
                sample_forest(&g, 0.7, seed).unwrap()
            );
        }
    }

    #[test]
    fn k2_weights() {
        let g = k2();
        let roots = RootedForest::all_roots(2, 1.0);
        assert!((forest_weight(&g, 1.0, &roots).unwrap() - 0.25).abs() < 1e-15);
        let edge = RootedForest::from_parents(vec![None, Some(0)], 1.0);
        assert!((forest_weight(&g, 1.0, &edge).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn all_roots_weight_is_product() {
        let g = path3();
        let q = 0.7;
        let want: f64 = g.degrees().iter().map(|&d| q / (q + d as f64)).product();
        let got = forest_weight(&g, q, &RootedForest::all_roots(3, q)).unwrap();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn weight_rejects_invalid_forests() {
        let g = path3();
        let non_edge = RootedForest::from_parents(vec![Some(2), None, None], 1.0);
        assert!(forest_weight(&g, 1.0, &non_edge).is_err());
        let cycle = RootedForest::from_parents(vec![Some(1), Some(0), None], 1.0);
        assert!(forest_weight(&g, 1.0, &cycle).is_err());
    }

    #[test]
    fn enumerate_k2() {
        let d = enumerate_forests(&k2(), 1.0).unwrap();
        assert_eq!(d.support.len(), 3);
        for (_, p) in &d.support {
            assert!((p - 1.0 / 3.0).abs() < 1e-14);
        }
        assert!((d.expected_root_count() - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn enumerate_single_node() {
        let d = enumerate_forests(&Graph::from_edges(1, &[]).unwrap(), 2.0).unwrap();
        assert_eq!(d.support.len(), 1);
        assert_eq!(d.support[0].1, 1.0);
    }

    #[test]
    fn enumerate_counts_match_det_l_plus_i() {
        // Number of rooted spanning forests is det(L + I).
        let cases = [
            (path3(), 8usize),
            (Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap(), 16),
            (Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap(), 20),
        ];
        for (g, count) in cases {
            assert_eq!(enumerate_forests(&g, 1.0).unwrap().support.len(), count);
        }
    }

    #[test]
    fn enumerate_guard() {
        let edges: Vec<_> = (0..10).map(|i| (i, i + 1)).collect();
        let g = Graph::from_edges(11, &edges).unwrap();
        assert!(matches!(
            enumerate_forests(&g, 1.0),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn components_of_forests() {
        let f = RootedForest::from_parents(vec![None, Some(0)], 1.0);
        let p = components(&f).unwrap();
        assert_eq!((p.assignment(), p.k()), (&[0usize, 0][..], 1));

        let tree = RootedForest::from_parents(vec![Some(1), None, Some(1)], 1.0);
        assert_eq!(components(&tree).unwrap().k(), 1);
    }

    #[test]
    fn reboot_rejects_larger_q() {
        let f = sample_forest(&k2(), 1.0, 0).unwrap();
        assert!(reboot(&k2(), &f, 1.0, 0).is_err());
        assert!(reboot(&k2(), &f, 2.0, 0).is_err());
    }

    #[test]
    fn reboot_near_q_keeps_forest() {
        let g = path3();
        let mut same = 0;
        for seed in 0..200 {
            let f = sample_forest(&g, 4.0, seed).unwrap();
            let r = reboot(&g, &f, 4.0 * (1.0 - 1e-9), seed + 1000).unwrap();
            same += usize::from(r.parents() == f.parents());
        }
        assert_eq!(same, 200);
    }

    #[test]
    fn join_merges_overlaps() {
        let a = Partition::new(vec![0, 0, 1, 2]).unwrap();
        let b = Partition::new(vec![0, 1, 1, 2]).unwrap();
        let j = a.join(&b).unwrap();
        assert_eq!(j.assignment(), &[0, 0, 0, 1]);
        assert!(a.refines(&j) && b.refines(&j));
        assert!(!j.refines(&a));
    }
}
