use ndarray::{s, Array1, Array2};

use super::eigen::{laplacian, smallest_eigenpairs, smallest_nonconstant_eigvec, EigenOptions, SIGN_TOL};
use super::kmeans::{kmeans_lloyd, KMeansOptions};
use crate::error::{Error, Result};
use crate::tree::FlatPartition;

/// Partition by the sign of a (sign-canonicalized) Fiedler vector: entries
/// `>= 0` get label 0. If one side comes out empty, the top half by value
/// (ties by index) gets label 0 instead.
pub fn sign_split(v: &Array1<f64>) -> FlatPartition {
    let m = v.len();
    let labels: Vec<usize> = v.iter().map(|&x| if x >= -SIGN_TOL { 0 } else { 1 }).collect();
    if labels.contains(&0) && labels.contains(&1) {
        return FlatPartition::new(labels, 2).expect("both labels used");
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut labels = vec![1; m];
    for &i in &order[..m.div_ceil(2)] {
        labels[i] = 0;
    }
    FlatPartition::new_degenerate(labels, 2).expect("labels below 2")
}

/// Two-way spectral partition of a similarity matrix.
pub fn spectral_split(w: &Array2<f64>, seed: u64) -> Result<FlatPartition> {
    spectral_split_with(
        w,
        &EigenOptions {
            seed,
            ..EigenOptions::default()
        },
    )
}

pub fn spectral_split_with(w: &Array2<f64>, opts: &EigenOptions) -> Result<FlatPartition> {
    if w.nrows() < 2 {
        return Err(Error::InvalidParameter(
            "spectral split needs at least 2 objects".into(),
        ));
    }
    let l = laplacian(w)?;
    let (_, v) = smallest_nonconstant_eigvec(&l, opts)?;
    Ok(sign_split(&v))
}

/// k-way spectral partition: rows of eigenvectors 2..k, clustered by
/// Lloyd's algorithm with 5 restarts.
pub fn spectral_kway(w: &Array2<f64>, k: usize, seed: u64) -> Result<FlatPartition> {
    spectral_kway_with(
        w,
        k,
        &EigenOptions {
            seed,
            ..EigenOptions::default()
        },
        100,
    )
}

pub fn spectral_kway_with(w: &Array2<f64>, k: usize, opts: &EigenOptions, max_iter: usize) -> Result<FlatPartition> {
    let m = w.nrows();
    if k < 2 || k > m {
        return Err(Error::InvalidParameter(format!(
            "spectral_kway needs 2 <= k <= m, got k={k}, m={m}"
        )));
    }
    let l = laplacian(w)?;
    let eig = smallest_eigenpairs(&l, k, opts)?;
    let embedding = eig.vectors.slice(s![.., 1..k]).to_owned();
    let fit = kmeans_lloyd(
        embedding.view(),
        k,
        &KMeansOptions {
            max_iter,
            restarts: 5,
            seed: opts.seed,
        },
    )?;
    FlatPartition::new(fit.labels, k)
}

/// Number of clusters maximizing the gap `lambda[k] - lambda[k-1]`
/// (1-based `k` in `1..=kmax`), ties toward the smaller `k`.
pub fn eigengap_select_k(eigenvalues: &[f64], kmax: usize) -> Result<usize> {
    if kmax == 0 || eigenvalues.len() < kmax + 1 {
        return Err(Error::InvalidParameter(format!(
            "need at least kmax+1={} eigenvalues, got {}",
            kmax + 1,
            eigenvalues.len()
        )));
    }
    if let Some(i) = eigenvalues.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::Unsorted(i + 1));
    }
    let mut best = 1;
    let mut best_gap = eigenvalues[1] - eigenvalues[0];
    for k in 2..=kmax {
        let gap = eigenvalues[k] - eigenvalues[k - 1];
        if gap > best_gap {
            best = k;
            best_gap = gap;
        }
    }
    Ok(best)
}
