//! Active hierarchical clustering from a budget of pairwise similarity
//! queries.
//!
//! The recursive driver lives in [`active`]; it samples a few objects per
//! cluster, clusters them with a [`flat::FlatAlgorithm`], and places the
//! rest by average similarity. [`hbm`] generates noisy hierarchical block
//! matrices with a planted tree, and [`metrics`] scores the results.

pub mod active;
pub mod error;
pub mod flat;
pub mod hbm;
pub mod metrics;
pub mod oracle;
pub mod seed;
pub mod tree;

pub use active::{
    active_cluster, assign_by_average, heurspec_cluster, nonactive_hierarchical, ActiveConfig, ActiveOutcome,
    Heuristics, NewClusterThreshold, SplitTrace,
};
pub use error::{Error, Result};
pub use flat::{single_linkage, FlatAlgorithm, FlatClusterer, FlatKind};
pub use hbm::{generate, Band, BandMode, Bands, HbmInstance, NoisyHbmSpec, TreeShape};
pub use metrics::{
    exact_split_recovery, hkm, hrc, min_sample_size, outlier_fraction, BoundParams, OutlierFractionMode,
};
pub use oracle::{Kernel, QueryBudgetReport, SimilarityOracle};
pub use tree::{validate_tree, ClusterTree, FlatPartition, ObjectId, Triplet};
