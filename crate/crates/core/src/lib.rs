//! Random-forest graph coarsening: Kirchhoff forest sampling, nested
//! coarsening hierarchies, spectral resolution selection, size and cost
//! estimates, and a multi-resolution graph classifier.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod estimators;
pub mod forest;
pub mod graph;
pub mod hierarchy;
pub mod io;
pub mod net;
pub mod qselect;
pub mod rng;

pub use error::{Error, Result};
pub use forest::{
    components, enumerate_forests, forest_weight, reboot, sample_forest, ForestDistribution,
    Partition, RootedForest,
};
pub use graph::{Graph, SymmetricMatrix};
pub use hierarchy::{build_hierarchy, AggMode, Hierarchy, PartitionMatrix};
pub use qselect::{select_q, select_q_many, QCurve, QRecord};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
