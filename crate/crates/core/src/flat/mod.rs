//! Flat clustering subroutines plugged into the recursive framework, plus
//! the non-active single-linkage baseline.

pub mod eigen;
pub mod kmeans;
pub mod linkage;
pub mod spectral;

use ndarray::Array2;

pub use eigen::{
    canonicalize_sign, jacobi_eigen, laplacian, smallest_eigenpairs, smallest_nonconstant_eigvec, EigenOptions,
    EigenResult, Laplacian,
};
pub use kmeans::{kmeans_lloyd, kmeans_rows, KMeansFit, KMeansOptions};
pub use linkage::single_linkage;
pub use spectral::{eigengap_select_k, sign_split, spectral_kway, spectral_split};

use crate::error::{Error, Result};
use crate::tree::FlatPartition;

/// A flat clustering algorithm: maps a similarity matrix and `k` to a
/// `k`-way partition. Must be deterministic in `(w, k, seed)`.
pub trait FlatAlgorithm: Sync {
    fn cluster(&self, w: &Array2<f64>, k: usize, seed: u64) -> Result<FlatPartition>;

    /// True if this algorithm is Laplacian-based, which the heuristic
    /// variant requires.
    fn is_spectral(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlatKind {
    SpectralBinary,
    SpectralKway,
    KMeansRows,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatClusterer {
    pub kind: FlatKind,
    /// Lloyd iterations (k-means and the k-way embedding step).
    pub max_iter: usize,
    pub restarts: usize,
    /// Eigen residual tolerance.
    pub tol: f64,
}

impl FlatClusterer {
    pub fn new(kind: FlatKind) -> Self {
        FlatClusterer {
            kind,
            max_iter: 100,
            restarts: 5,
            tol: 1e-8,
        }
    }

    pub fn spectral() -> Self {
        Self::new(FlatKind::SpectralBinary)
    }

    pub fn spectral_kway() -> Self {
        Self::new(FlatKind::SpectralKway)
    }

    pub fn kmeans() -> Self {
        Self::new(FlatKind::KMeansRows)
    }

    fn eigen_options(&self, seed: u64) -> EigenOptions {
        EigenOptions {
            tol: self.tol,
            max_iter: None,
            seed,
        }
    }
}

impl FlatAlgorithm for FlatClusterer {
    fn cluster(&self, w: &Array2<f64>, k: usize, seed: u64) -> Result<FlatPartition> {
        match self.kind {
            FlatKind::SpectralBinary if k == 2 => spectral::spectral_split_with(w, &self.eigen_options(seed)),
            FlatKind::SpectralBinary | FlatKind::SpectralKway => {
                spectral::spectral_kway_with(w, k, &self.eigen_options(seed), self.max_iter)
            }
            FlatKind::KMeansRows => {
                if k > w.nrows() {
                    return Err(Error::InvalidParameter(format!("k={k} exceeds {} objects", w.nrows())));
                }
                kmeans_rows(
                    w,
                    k,
                    &KMeansOptions {
                        max_iter: self.max_iter,
                        restarts: self.restarts,
                        seed,
                    },
                )
            }
        }
    }

    fn is_spectral(&self) -> bool {
        matches!(self.kind, FlatKind::SpectralBinary | FlatKind::SpectralKway)
    }
}
