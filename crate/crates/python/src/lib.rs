//! Python bindings: graphs, forest sampling, hierarchies, q-selection,
//! size estimates and the multi-resolution classifier.

use kfh::data::{gen_synthetic as gen, GenConfig, Task};
use kfh::estimators::{self, NodeEstimate};
use kfh::hierarchy::AggMode;
use kfh::io;
use kfh::net::{self, Checkpoint, ModelConfig, ModelParams, Optimizer, Split, TrainConfig};
use kfh::qselect::{log_grid, QCurve};
use nalgebra::DMatrix;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: kfh::Error) -> PyErr {
    match e {
        kfh::Error::Io(io) => PyOSError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>], what: &str) -> PyResult<DMatrix<f64>> {
    let width = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != width) {
        return Err(PyValueError::new_err(format!("{what} rows are ragged")));
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

#[pyclass(name = "Graph", module = "kfh_py")]
pub struct PyGraph {
    inner: kfh::Graph,
}

#[pymethods]
impl PyGraph {
    /// Missing node features default to one constant column.
    #[new]
    #[pyo3(signature = (n, edges, node_features=None, edge_features=None, label=None))]
    fn new(
        n: usize,
        edges: Vec<(usize, usize)>,
        node_features: Option<Vec<Vec<f64>>>,
        edge_features: Option<Vec<Vec<f64>>>,
        label: Option<usize>,
    ) -> PyResult<Self> {
        let x = match node_features {
            Some(r) => matrix(&r, "node_features")?,
            None => DMatrix::from_element(n, 1, 1.0),
        };
        let xe = edge_features
            .map(|r| matrix(&r, "edge_features"))
            .transpose()?;
        let inner = kfh::Graph::new(&edges, x, xe, label).map_err(err)?;
        Ok(PyGraph { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyGraph {
            inner: io::graph_from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        io::graph_to_json(&self.inner)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    #[getter]
    fn label(&self) -> Option<usize> {
        self.inner.label()
    }

    #[getter]
    fn node_features(&self) -> Vec<Vec<f64>> {
        rows(self.inner.node_features())
    }

    #[getter]
    fn edge_features(&self) -> Vec<Vec<f64>> {
        rows(self.inner.edge_features())
    }

    fn degrees(&self) -> Vec<usize> {
        self.inner.degrees()
    }

    fn mean_degree(&self) -> f64 {
        self.inner.mean_degree()
    }

    fn laplacian(&self) -> Vec<Vec<f64>> {
        rows(self.inner.laplacian().as_matrix())
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, m={})", self.inner.n(), self.inner.m())
    }
}

#[pyclass(name = "Forest", module = "kfh_py")]
pub struct PyForest {
    inner: kfh::RootedForest,
}

#[pymethods]
impl PyForest {
    #[getter]
    fn q(&self) -> f64 {
        self.inner.q()
    }

    #[getter]
    fn parents(&self) -> Vec<Option<usize>> {
        self.inner.parents().to_vec()
    }

    fn roots(&self) -> Vec<usize> {
        self.inner.roots()
    }

    fn root_count(&self) -> usize {
        self.inner.root_count()
    }

    /// Tree index of every node.
    fn components(&self) -> PyResult<Vec<usize>> {
        Ok(kfh::components(&self.inner)
            .map_err(err)?
            .assignment()
            .to_vec())
    }

    fn to_json(&self) -> String {
        io::forest_to_json(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Forest(n={}, q={}, roots={})",
            self.inner.n(),
            io::format_q(self.inner.q()),
            self.inner.root_count()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (graph, q, seed=0))]
fn sample_forest(graph: &PyGraph, q: f64, seed: u64) -> PyResult<PyForest> {
    Ok(PyForest {
        inner: kfh::sample_forest(&graph.inner, q, seed).map_err(err)?,
    })
}

#[pyfunction]
#[pyo3(signature = (graph, forest, q_prime, seed=0))]
fn reboot(graph: &PyGraph, forest: &PyForest, q_prime: f64, seed: u64) -> PyResult<PyForest> {
    Ok(PyForest {
        inner: kfh::reboot(&graph.inner, &forest.inner, q_prime, seed).map_err(err)?,
    })
}

#[pyclass(name = "Hierarchy", module = "kfh_py")]
pub struct PyHierarchy {
    inner: kfh::Hierarchy,
}

#[pymethods]
impl PyHierarchy {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyHierarchy {
            inner: io::hierarchy_from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        io::hierarchy_to_json(&self.inner)
    }

    #[getter]
    fn q_sequence(&self) -> Vec<f64> {
        self.inner.q_sequence.clone()
    }

    #[getter]
    fn depth(&self) -> usize {
        self.inner.depth()
    }

    #[getter]
    fn label(&self) -> Option<usize> {
        self.inner.label()
    }

    fn level(&self, k: usize) -> PyResult<PyGraph> {
        self.inner
            .levels
            .get(k)
            .map(|g| PyGraph { inner: g.clone() })
            .ok_or_else(|| PyValueError::new_err(format!("no level {k}")))
    }

    /// Node count per level, finest first.
    fn level_sizes(&self) -> Vec<usize> {
        self.inner.levels.iter().map(kfh::Graph::n).collect()
    }

    /// Dense `P^(0,k)`.
    fn base_partition(&self, k: usize) -> PyResult<Vec<Vec<f64>>> {
        self.inner
            .base_partitions
            .get(k)
            .map(|p| rows(&p.to_dense()))
            .ok_or_else(|| PyValueError::new_err(format!("no level {k}")))
    }

    fn composition_error(&self) -> f64 {
        self.inner.composition_error()
    }

    fn __repr__(&self) -> String {
        format!("Hierarchy(levels={:?})", self.level_sizes())
    }
}

#[pyfunction]
#[pyo3(signature = (graph, q_sequence, agg="mean", seed=0))]
fn build_hierarchy(
    graph: &PyGraph,
    q_sequence: Vec<f64>,
    agg: &str,
    seed: u64,
) -> PyResult<PyHierarchy> {
    let mode: AggMode = agg.parse().map_err(err)?;
    Ok(PyHierarchy {
        inner: kfh::build_hierarchy(&graph.inner, &q_sequence, mode, seed).map_err(err)?,
    })
}

fn curve_dict<'py>(py: Python<'py>, c: &QCurve) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("q_star", c.q_star)?;
    d.set_item("phi", c.phi)?;
    let records = c
        .records
        .iter()
        .map(|r| {
            let rd = PyDict::new(py);
            rd.set_item("q", r.q)?;
            rd.set_item("recon_node", r.recon_node)?;
            rd.set_item("dir_node", r.dir_node)?;
            rd.set_item("recon_edge", r.recon_edge)?;
            rd.set_item("dir_edge", r.dir_edge)?;
            rd.set_item("df_node", r.df_node)?;
            rd.set_item("df_edge", r.df_edge)?;
            rd.set_item("J", r.j)?;
            Ok(rd)
        })
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("records", records)?;
    Ok(d)
}

/// q-selection curve averaged over `graphs`; the default grid is 61 log-spaced
/// points in [1e-2, 1e3].
#[pyfunction]
#[pyo3(signature = (graphs, grid=None, phi=1.0))]
fn select_q<'py>(
    py: Python<'py>,
    graphs: Vec<PyRef<'py, PyGraph>>,
    grid: Option<Vec<f64>>,
    phi: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = match grid {
        Some(g) => g,
        None => log_grid(1e-2, 1e3, 61).map_err(err)?,
    };
    let gs: Vec<kfh::Graph> = graphs.iter().map(|g| g.inner.clone()).collect();
    let curve = kfh::select_q_many(&gs, &grid, phi).map_err(err)?;
    curve_dict(py, &curve)
}

#[pyfunction]
#[pyo3(signature = (graph, q, mode="spectral"))]
fn expected_coarse_nodes(graph: &PyGraph, q: f64, mode: &str) -> PyResult<f64> {
    let mode = match mode {
        "spectral" => NodeEstimate::Spectral,
        "degree" => NodeEstimate::Degree,
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    estimators::expected_coarse_nodes(&graph.inner, q, mode).map_err(err)
}

#[pyfunction]
fn expected_coarse_edges(graph: &PyGraph, q: f64) -> PyResult<f64> {
    estimators::expected_coarse_edges(&graph.inner, q).map_err(err)
}

#[pyfunction]
fn reduction_ratio(graph: &PyGraph, q: f64) -> PyResult<f64> {
    estimators::reduction_ratio(&graph.inner, q).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (task, n_graphs, min_nodes, max_nodes, seed=0))]
fn gen_synthetic(
    task: &str,
    n_graphs: usize,
    min_nodes: usize,
    max_nodes: usize,
    seed: u64,
) -> PyResult<Vec<PyGraph>> {
    let task: Task = task.parse().map_err(err)?;
    let graphs = gen(&GenConfig {
        task,
        n_graphs,
        min_nodes,
        max_nodes,
        seed,
    })
    .map_err(err)?;
    Ok(graphs.into_iter().map(|inner| PyGraph { inner }).collect())
}

#[pyclass(name = "Model", module = "kfh_py")]
pub struct PyModel {
    inner: ModelParams,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (node_features, hidden, classes, layers, edge_features=0, linear_per_layer=2, mlp_layers=2, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        node_features: usize,
        hidden: usize,
        classes: usize,
        layers: Vec<usize>,
        edge_features: usize,
        linear_per_layer: usize,
        mlp_layers: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let config = ModelConfig {
            node_features,
            edge_features,
            hidden,
            classes,
            layers_per_level: layers,
            linear_per_layer,
            mlp_layers,
        };
        Ok(PyModel {
            inner: ModelParams::init(config, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyModel {
            inner: ckpt.into_params().map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&Checkpoint::from(&self.inner)).expect("checkpoints serialize")
    }

    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    /// Class logits for one hierarchy.
    fn forward(&self, h: &PyHierarchy) -> PyResult<Vec<f64>> {
        Ok(net::forward(&h.inner, &self.inner)
            .map_err(err)?
            .iter()
            .copied()
            .collect())
    }

    fn predict(&self, h: &PyHierarchy) -> PyResult<usize> {
        let z = self.forward(h)?;
        Ok(z.iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
                if v > best.1 {
                    (i, v)
                } else {
                    best
                }
            })
            .0)
    }
}

/// Trains a copy of `model` on labelled hierarchies and returns the trained
/// model with a report of per-epoch metrics and the test score.
#[pyfunction]
#[pyo3(signature = (
    hierarchies, model, batch_size=32, lr=0.005, weight_decay=1e-5, epochs=100,
    patience=10, fixed_epochs=false, optimizer="adamw", train_frac=0.7, val_frac=0.15, seed=0
))]
#[allow(clippy::too_many_arguments)]
fn train<'py>(
    py: Python<'py>,
    hierarchies: Vec<PyRef<'py, PyHierarchy>>,
    model: &PyModel,
    batch_size: usize,
    lr: f64,
    weight_decay: f64,
    epochs: usize,
    patience: usize,
    fixed_epochs: bool,
    optimizer: &str,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> PyResult<(PyModel, Bound<'py, PyDict>)> {
    let data = hierarchies
        .iter()
        .enumerate()
        .map(|(i, h)| match h.inner.label() {
            Some(l) => Ok((h.inner.clone(), l)),
            None => Err(PyValueError::new_err(format!("hierarchy {i} has no label"))),
        })
        .collect::<PyResult<Vec<_>>>()?;
    let split = Split::random(data.len(), train_frac, val_frac, seed).map_err(err)?;
    let cfg = TrainConfig {
        batch_size,
        learning_rate: lr,
        weight_decay,
        seed,
        max_epochs: epochs,
        early_stop_patience: patience,
        optimizer: optimizer.parse::<Optimizer>().map_err(err)?,
        fixed_epochs,
        ..Default::default()
    };
    let p0 = model.inner.clone();
    let out = py
        .detach(|| net::train(&data, &split, &cfg, &p0))
        .map_err(err)?;
    let report = PyDict::new(py);
    let history = out
        .history
        .iter()
        .map(|m| {
            let d = PyDict::new(py);
            d.set_item("epoch", m.epoch)?;
            d.set_item("train_loss", m.train_loss)?;
            d.set_item("train_acc", m.train_acc)?;
            d.set_item("val_loss", m.val_loss)?;
            d.set_item("val_acc", m.val_acc)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    report.set_item("history", history)?;
    report.set_item("best_epoch", out.best_epoch)?;
    report.set_item("test_loss", out.test.loss)?;
    report.set_item("test_accuracy", out.test.accuracy)?;
    Ok((PyModel { inner: out.params }, report))
}

#[pymodule]
fn kfh_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", kfh::VERSION)?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PyForest>()?;
    m.add_class::<PyHierarchy>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(sample_forest, m)?)?;
    m.add_function(wrap_pyfunction!(reboot, m)?)?;
    m.add_function(wrap_pyfunction!(build_hierarchy, m)?)?;
    m.add_function(wrap_pyfunction!(select_q, m)?)?;
    m.add_function(wrap_pyfunction!(expected_coarse_nodes, m)?)?;
    m.add_function(wrap_pyfunction!(expected_coarse_edges, m)?)?;
    m.add_function(wrap_pyfunction!(reduction_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
