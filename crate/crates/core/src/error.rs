use thiserror::Error;

use crate::active::SplitTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("object id {id} out of range for {n} objects")]
    OutOfRange { id: usize, n: usize },

    #[error("duplicate object id {0}")]
    DuplicateId(usize),

    #[error("ids of a triplet must be distinct, got ({0}, {1}, {2})")]
    NonDistinctTriplet(usize, usize, usize),

    #[error("tree has no split clusters")]
    NoSplits,

    #[error("matrix is not symmetric at ({row}, {col}): {a} vs {b}")]
    Asymmetric { row: usize, col: usize, a: f64, b: f64 },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("eigenvalues are not sorted ascending at position {0}")]
    Unsorted(usize),

    #[error("invalid band nesting at cluster {cluster}: {reason}")]
    InvalidBands { cluster: usize, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("seed cluster {0} is empty")]
    EmptySeedCluster(usize),

    #[error("degree filtering discarded every sampled object")]
    DegenerateSample,

    #[error("flat clustering failed while splitting a cluster of {} objects: {source}", trace.cluster.len())]
    SplitFailed {
        trace: Box<SplitTrace>,
        #[source]
        source: Box<Error>,
    },

    #[error("feature vector or cluster center has zero norm")]
    DegenerateFeatures,

    #[error("no cluster is larger than the minimum size {0}")]
    NoQualifyingClusters(usize),

    #[error("size mismatch: {0} vs {1}")]
    SizeMismatch(usize, usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short stable name of the variant, for logs and CSV columns.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::OutOfRange { .. } => "out_of_range",
            Error::DuplicateId(_) => "duplicate_id",
            Error::NonDistinctTriplet(..) => "non_distinct_triplet",
            Error::NoSplits => "no_splits",
            Error::Asymmetric { .. } => "asymmetric",
            Error::NotSquare { .. } => "not_square",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Unsorted(_) => "unsorted",
            Error::InvalidBands { .. } => "invalid_bands",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::EmptySeedCluster(_) => "empty_seed_cluster",
            Error::DegenerateSample => "degenerate_sample",
            Error::SplitFailed { source, .. } => source.tag(),
            Error::DegenerateFeatures => "degenerate_features",
            Error::NoQualifyingClusters(_) => "no_qualifying_clusters",
            Error::SizeMismatch(..) => "size_mismatch",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}
