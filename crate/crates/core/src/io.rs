//! JSON, JSON-lines, CSV and edge-list formats.
//!
//! Graphs: `{"n", "edges", "node_features", "edge_features", "label"}`.
//! Forests: `{"q": real | "inf", "parents": [int | null, ...]}`.
//! Hierarchies: a bundle with `q_sequence`, `agg_mode`, per-level graphs and
//! sparse partition triplets, stored either as one JSON value or as a
//! directory with one file per piece.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::forest::RootedForest;
use crate::graph::Graph;
use crate::hierarchy::{AggMode, Hierarchy, PartitionMatrix};
use crate::qselect::QCurve;

/// Resolution value that serializes `+inf` as the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QValue(pub f64);

impl Serialize for QValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for QValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(QValue(x)),
            Raw::Str(s) => parse_q(&s).map(QValue).map_err(serde::de::Error::custom),
        }
    }
}

/// Parses one resolution value; `inf` (any case) is `+inf`.
pub fn parse_q(s: &str) -> Result<f64> {
    let t = s.trim();
    if matches!(t.to_ascii_lowercase().as_str(), "inf" | "+inf" | "infinity") {
        return Ok(f64::INFINITY);
    }
    let q: f64 = t
        .parse()
        .map_err(|_| Error::Parse(format!("bad q value {t:?}")))?;
    if !(q > 0.0) {
        return Err(Error::InvalidQ(q));
    }
    Ok(q)
}

/// Comma-separated resolution list such as `inf,2.0`.
pub fn parse_q_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_q).collect()
}

pub fn format_q(q: f64) -> String {
    if q == f64::INFINITY {
        "inf".into()
    } else {
        q.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    /// Missing means one constant feature `1.0` per node.
    #[serde(default)]
    pub node_features: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub edge_features: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub label: Option<usize>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_of(what: &'static str, rows: &[Vec<f64>], expected: usize) -> Result<DMatrix<f64>> {
    if rows.len() != expected {
        return Err(Error::RowMismatch {
            what,
            expected,
            got: rows.len(),
        });
    }
    let width = rows.first().map_or(0, Vec::len);
    if let Some(r) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::Parse(format!(
            "{what}: ragged rows ({} vs {width})",
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(expected, width, |i, j| rows[i][j]))
}

impl From<&Graph> for GraphRecord {
    fn from(g: &Graph) -> Self {
        GraphRecord {
            n: g.n(),
            edges: g.edges().iter().map(|&(i, j)| [i, j]).collect(),
            node_features: Some(rows_of(g.node_features())),
            edge_features: (g.edge_feature_dim() > 0).then(|| rows_of(g.edge_features())),
            label: g.label(),
        }
    }
}

impl TryFrom<&GraphRecord> for Graph {
    type Error = Error;

    fn try_from(r: &GraphRecord) -> Result<Graph> {
        let x = match &r.node_features {
            Some(rows) => matrix_of("node_features", rows, r.n)?,
            None => DMatrix::from_element(r.n, 1, 1.0),
        };
        let xe = match &r.edge_features {
            Some(rows) => Some(matrix_of("edge_features", rows, r.edges.len())?),
            None => None,
        };
        let edges: Vec<(usize, usize)> = r.edges.iter().map(|e| (e[0], e[1])).collect();
        Graph::new(&edges, x, xe, r.label)
    }
}

pub fn graph_to_json(g: &Graph) -> String {
    serde_json::to_string(&GraphRecord::from(g)).expect("graph records always serialize")
}

pub fn graph_from_json(s: &str) -> Result<Graph> {
    Graph::try_from(&serde_json::from_str::<GraphRecord>(s)?)
}

/// Whitespace-separated `i j` pairs, one per line; `#` and `%` start
/// comments. Nodes are `0..=max index`, each with feature `1.0`.
pub fn graph_from_edge_list(text: &str) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut n = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split(['#', '%']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut next = || -> Result<usize> {
            let tok = it.next().ok_or_else(|| {
                Error::Parse(format!("line {}: expected two node ids", lineno + 1))
            })?;
            tok.parse()
                .map_err(|_| Error::Parse(format!("line {}: bad node id {tok:?}", lineno + 1)))
        };
        let (i, j) = (next()?, next()?);
        n = n.max(i + 1).max(j + 1);
        edges.push((i, j));
    }
    Graph::from_edges(n, &edges)
}

/// Parses a dataset: JSON lines, a JSON array of graphs, or a single graph.
pub fn dataset_from_str(text: &str) -> Result<Vec<Graph>> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let records: Vec<GraphRecord> = serde_json::from_str(trimmed)?;
        return records.iter().map(Graph::try_from).collect();
    }
    // A single (possibly pretty-printed) graph.
    if let Ok(r) = serde_json::from_str::<GraphRecord>(trimmed) {
        return Ok(vec![Graph::try_from(&r)?]);
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            graph_from_json(l).map_err(|e| Error::Parse(format!("graph on line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn dataset_to_jsonl(graphs: &[Graph]) -> String {
    let mut out = String::new();
    for g in graphs {
        out.push_str(&graph_to_json(g));
        out.push('\n');
    }
    out
}

/// Reads a graph file. `.json` and `.jsonl` files hold graph records (a
/// `.jsonl` file must contain exactly one); anything else is an edge list.
pub fn read_graph(path: &Path) -> Result<Graph> {
    let text = fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("jsonl") => {
            let mut gs = dataset_from_str(&text)?;
            if gs.len() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "{} holds {} graphs, expected one",
                    path.display(),
                    gs.len()
                )));
            }
            Ok(gs.pop().unwrap())
        }
        _ => graph_from_edge_list(&text),
    }
}

/// Reads a dataset file; edge-list files give a one-graph dataset.
pub fn read_dataset(path: &Path) -> Result<Vec<Graph>> {
    let text = fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") | Some("jsonl") => dataset_from_str(&text),
        _ => Ok(vec![graph_from_edge_list(&text)?]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestRecord {
    pub q: QValue,
    pub parents: Vec<Option<usize>>,
}

pub fn forest_to_json(f: &RootedForest) -> String {
    serde_json::to_string(&ForestRecord {
        q: QValue(f.q()),
        parents: f.parents().to_vec(),
    })
    .expect("forest records always serialize")
}

/// Parses a forest and checks that parent pointers form a rooted forest.
pub fn forest_from_json(s: &str) -> Result<RootedForest> {
    let r: ForestRecord = serde_json::from_str(s)?;
    let f = RootedForest::from_parents(r.parents, r.q.0);
    f.root_of_all()?;
    Ok(f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub rows: usize,
    pub cols: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

impl From<&PartitionMatrix> for TripletRecord {
    fn from(p: &PartitionMatrix) -> Self {
        TripletRecord {
            rows: p.nrows(),
            cols: p.ncols(),
            triplets: p.triplets(),
        }
    }
}

impl TryFrom<&TripletRecord> for PartitionMatrix {
    type Error = Error;

    fn try_from(t: &TripletRecord) -> Result<PartitionMatrix> {
        PartitionMatrix::from_triplets(t.rows, t.cols, &t.triplets)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyMeta {
    pub q_sequence: Vec<QValue>,
    pub agg_mode: AggMode,
    pub depth: usize,
    pub original_n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyBundle {
    #[serde(flatten)]
    pub meta: HierarchyMeta,
    pub levels: Vec<GraphRecord>,
    pub step_partitions: Vec<TripletRecord>,
    pub base_partitions: Vec<TripletRecord>,
}

impl From<&Hierarchy> for HierarchyBundle {
    fn from(h: &Hierarchy) -> Self {
        HierarchyBundle {
            meta: HierarchyMeta {
                q_sequence: h.q_sequence.iter().map(|&q| QValue(q)).collect(),
                agg_mode: h.agg_mode,
                depth: h.depth(),
                original_n: h.original_n(),
            },
            levels: h.levels.iter().map(GraphRecord::from).collect(),
            step_partitions: h.step_partitions.iter().map(TripletRecord::from).collect(),
            base_partitions: h.base_partitions.iter().map(TripletRecord::from).collect(),
        }
    }
}

impl TryFrom<&HierarchyBundle> for Hierarchy {
    type Error = Error;

    fn try_from(b: &HierarchyBundle) -> Result<Hierarchy> {
        let h = Hierarchy {
            q_sequence: b.meta.q_sequence.iter().map(|q| q.0).collect(),
            levels: b
                .levels
                .iter()
                .map(Graph::try_from)
                .collect::<Result<_>>()?,
            step_partitions: b
                .step_partitions
                .iter()
                .map(PartitionMatrix::try_from)
                .collect::<Result<_>>()?,
            base_partitions: b
                .base_partitions
                .iter()
                .map(PartitionMatrix::try_from)
                .collect::<Result<_>>()?,
            agg_mode: b.meta.agg_mode,
        };
        h.validate()?;
        if h.depth() != b.meta.depth || h.original_n() != b.meta.original_n {
            return Err(Error::dim(
                "hierarchy bundle",
                "metadata disagrees with contents",
            ));
        }
        Ok(h)
    }
}

pub fn hierarchy_to_json(h: &Hierarchy) -> String {
    serde_json::to_string(&HierarchyBundle::from(h)).expect("hierarchy bundles always serialize")
}

pub fn hierarchy_from_json(s: &str) -> Result<Hierarchy> {
    Hierarchy::try_from(&serde_json::from_str::<HierarchyBundle>(s)?)
}

/// One bundle per line.
pub fn hierarchies_to_jsonl(hs: &[Hierarchy]) -> String {
    let mut out = String::new();
    for h in hs {
        out.push_str(&hierarchy_to_json(h));
        out.push('\n');
    }
    out
}

pub fn hierarchies_from_jsonl(text: &str) -> Result<Vec<Hierarchy>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            hierarchy_from_json(l)
                .map_err(|e| Error::Parse(format!("hierarchy on line {}: {e}", i + 1)))
        })
        .collect()
}

/// File name and contents of each piece of a hierarchy directory:
/// `meta.json`, `level_K.json`, `step_K.json` and `base_K.json`.
pub fn hierarchy_dir_files(h: &Hierarchy) -> Vec<(String, String)> {
    let b = HierarchyBundle::from(h);
    let mut files = vec![("meta.json".to_string(), json(&b.meta))];
    for (k, g) in b.levels.iter().enumerate() {
        files.push((format!("level_{k}.json"), json(g)));
    }
    for (k, t) in b.step_partitions.iter().enumerate() {
        files.push((format!("step_{k}.json"), json(t)));
    }
    for (k, t) in b.base_partitions.iter().enumerate() {
        files.push((format!("base_{k}.json"), json(t)));
    }
    files
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("bundle pieces always serialize")
}

pub fn read_hierarchy_dir(dir: &Path) -> Result<Hierarchy> {
    fn load<T: serde::de::DeserializeOwned>(dir: &Path, name: &str) -> Result<T> {
        let path = dir.join(name);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
    let meta: HierarchyMeta = load(dir, "meta.json")?;
    let d = meta.depth;
    let bundle = HierarchyBundle {
        levels: (0..d)
            .map(|k| load(dir, &format!("level_{k}.json")))
            .collect::<Result<_>>()?,
        step_partitions: (0..d.saturating_sub(1))
            .map(|k| load(dir, &format!("step_{k}.json")))
            .collect::<Result<_>>()?,
        base_partitions: (0..d)
            .map(|k| load(dir, &format!("base_{k}.json")))
            .collect::<Result<_>>()?,
        meta,
    };
    Hierarchy::try_from(&bundle)
}

pub const CURVE_HEADER: &str = "q,recon_node,dir_node,recon_edge,dir_edge,df_node,df_edge,J";

pub fn curve_csv(c: &QCurve) -> String {
    let mut out = format!("{CURVE_HEADER}\n");
    for r in &c.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.q, r.recon_node, r.dir_node, r.recon_edge, r.dir_edge, r.df_node, r.df_edge, r.j
        )
        .unwrap();
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub q_star: f64,
    pub phi: f64,
    pub grid: Vec<f64>,
}

impl From<&QCurve> for CurveSummary {
    fn from(c: &QCurve) -> Self {
        CurveSummary {
            q_star: c.q_star,
            phi: c.phi,
            grid: c.grid(),
        }
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::dmatrix;

    use super::*;
    use crate::hierarchy::build_hierarchy;

    #[test]
    fn graph_round_trip() {
        let g = Graph::new(
            &[(0, 1), (1, 2)],
            dmatrix![0.1; -2.5; 1e-300],
            Some(dmatrix![1.0, 2.0; 3.0, 4.0]),
            Some(1),
        )
        .unwrap();
        assert_eq!(graph_from_json(&graph_to_json(&g)).unwrap(), g);
        let bare = graph_from_json(r#"{"n": 3, "edges": [[0, 2]]}"#).unwrap();
        assert_eq!(bare, Graph::from_edges(3, &[(0, 2)]).unwrap());
        assert!(graph_from_json(r#"{"n": 2, "edges": [[0, 0]]}"#).is_err());
        assert!(graph_from_json(r#"{"n": 2, "edges": [], "node_features": [[1.0]]}"#).is_err());
    }

    #[test]
    fn edge_list_parsing() {
        let g = graph_from_edge_list("# header\n0 1\n\n1 2 % trailing\n").unwrap();
        assert_eq!((g.n(), g.m()), (3, 2));
        assert!(graph_from_edge_list("0\n").is_err());
        assert!(graph_from_edge_list("0 x\n").is_err());
    }

    #[test]
    fn datasets_in_both_layouts() {
        let gs = vec![
            Graph::from_edges(2, &[(0, 1)]).unwrap().with_label(Some(0)),
            Graph::from_edges(1, &[]).unwrap(),
        ];
        let lines = dataset_to_jsonl(&gs);
        assert_eq!(dataset_from_str(&lines).unwrap(), gs);
        let array = format!("[{}]", lines.trim_end().replace('\n', ","));
        assert_eq!(dataset_from_str(&array).unwrap(), gs);
    }

    #[test]
    fn forest_json() {
        let f = RootedForest::from_parents(vec![None, Some(0), None], f64::INFINITY);
        let s = forest_to_json(&f);
        assert_eq!(s, r#"{"q":"inf","parents":[null,0,null]}"#);
        assert_eq!(forest_from_json(&s).unwrap(), f);
        let f = RootedForest::from_parents(vec![Some(1), None], 0.25);
        assert_eq!(forest_from_json(&forest_to_json(&f)).unwrap(), f);
        // A two-cycle has no root.
        assert!(forest_from_json(r#"{"q":1.0,"parents":[1,0]}"#).is_err());
    }

    #[test]
    fn q_parsing() {
        assert_eq!(parse_q_list("inf, 2.5").unwrap(), vec![f64::INFINITY, 2.5]);
        assert!(parse_q("0").is_err());
        assert!(parse_q("-1").is_err());
        assert!(parse_q("abc").is_err());
        assert_eq!(format_q(f64::INFINITY), "inf");
    }

    #[test]
    fn hierarchy_round_trips() {
        let edges: Vec<_> = (0..11)
            .map(|i| (i, i + 1))
            .chain([(0, 5), (3, 9)])
            .collect();
        let g = Graph::new(
            &edges,
            DMatrix::from_fn(12, 2, |i, j| (i * 3 + j) as f64 / 7.0),
            None,
            Some(1),
        )
        .unwrap();
        let h = build_hierarchy(&g, &[f64::INFINITY, 1.0, 0.2], AggMode::Mean, 5).unwrap();
        let back = hierarchy_from_json(&hierarchy_to_json(&h)).unwrap();
        assert_eq!(back.levels, h.levels);
        assert_eq!(back.step_partitions, h.step_partitions);
        assert_eq!(back.base_partitions, h.base_partitions);
        assert_eq!(back.q_sequence, h.q_sequence);

        let dir = std::env::temp_dir().join(format!("kfh-io-test-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        for (name, text) in hierarchy_dir_files(&h) {
            fs::write(dir.join(name), text).unwrap();
        }
        let from_dir = read_hierarchy_dir(&dir).unwrap();
        fs::remove_dir_all(&dir).unwrap();
        assert_eq!(from_dir.levels, h.levels);
        assert_eq!(from_dir.base_partitions, h.base_partitions);

        let many = hierarchies_from_jsonl(&hierarchies_to_jsonl(&[h.clone(), h])).unwrap();
        assert_eq!(many.len(), 2);
    }

    #[test]
    fn curve_output() {
        let g = Graph::new(&[(0, 1), (1, 2)], dmatrix![0.0; 1.0; 10.0], None, None).unwrap();
        let c = crate::qselect::select_q(&g, &[0.1, 1.0], 1.0).unwrap();
        let csv = curve_csv(&c);
        assert!(csv.starts_with(CURVE_HEADER));
        assert_eq!(csv.lines().count(), 3);
        let s = CurveSummary::from(&c);
        assert_eq!(s.grid, vec![0.1, 1.0]);
    }
}
