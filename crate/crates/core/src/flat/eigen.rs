//! Unnormalized graph Laplacians and an iterative solver for their
//! smallest eigenpairs.
//!
//! The solver runs block power iteration on the shifted operator `cI - L`
//! restricted to the complement of the all-ones vector, with a Rayleigh-Ritz
//! projection after every multiply. The projected `p x p` problems are
//! solved with cyclic Jacobi rotations.

use ndarray::{Array1, Array2, ArrayView2};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::oracle::{check_symmetric, SYMMETRY_TOL};
use crate::seed;

/// `L = D - W`, with degrees taken over off-diagonal entries only.
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian(Array2<f64>);

impl Laplacian {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn laplacian(w: &Array2<f64>) -> Result<Laplacian> {
    let (r, c) = w.dim();
    if r != c {
        return Err(Error::NotSquare { rows: r, cols: c });
    }
    check_symmetric(w, SYMMETRY_TOL)?;
    let m = r;
    let mut l = Array2::zeros((m, m));
    for i in 0..m {
        let mut deg = 0.0;
        for j in 0..m {
            if i != j {
                // read the upper triangle so L is exactly symmetric
                let v = if i < j { w[[i, j]] } else { w[[j, i]] };
                l[[i, j]] = -v;
                deg += v;
            }
        }
        l[[i, i]] = deg;
    }
    Ok(Laplacian(l))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    /// Residual tolerance relative to `max(1, ||L||_F)`.
    pub tol: f64,
    /// Defaults to `10 m ln m + 1000` when `None`.
    pub max_iter: Option<usize>,
    /// Seeds the starting block.
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-8,
            max_iter: None,
            seed: 0,
        }
    }
}

pub fn default_max_iter(m: usize) -> usize {
    let mf = m.max(1) as f64;
    (10.0 * mf * mf.ln()).ceil() as usize + 1000
}

/// Eigenpairs with unit-norm eigenvectors stored as columns: the constant
/// pair first, then the computed ones in ascending order.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: Array2<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl EigenResult {
    pub fn vector(&self, i: usize) -> Array1<f64> {
        self.vectors.column(i).to_owned()
    }

    /// Eigenvalues in ascending order. `values` lists the constant vector's
    /// zero first, which rounding (or negative weights) can put above the
    /// next value.
    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Entries with magnitude at or below this are treated as zero when fixing
/// signs and splitting by sign.
pub const SIGN_TOL: f64 = 1e-9;

/// Flip `v` so its first clearly nonzero entry is positive.
pub fn canonicalize_sign(v: &mut Array1<f64>) {
    if let Some(&first) = v.iter().find(|x| x.abs() > SIGN_TOL) {
        if first < 0.0 {
            v.mapv_inplace(|x| -x);
        }
    }
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Returns ascending eigenvalues and matching column vectors.
pub fn jacobi_eigen(a: ArrayView2<f64>) -> (Vec<f64>, Array2<f64>) {
    let p = a.nrows();
    let mut a = a.to_owned();
    let mut v = Array2::<f64>::eye(p);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * a[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for i in 0..p {
            for j in (i + 1)..p {
                let aij = a[[i, j]];
                if aij.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[[j, j]] - a[[i, i]]) / (2.0 * aij);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let aki = a[[k, i]];
                    let akj = a[[k, j]];
                    a[[k, i]] = c * aki - s * akj;
                    a[[k, j]] = s * aki + c * akj;
                }
                for k in 0..p {
                    let aik = a[[i, k]];
                    let ajk = a[[j, k]];
                    a[[i, k]] = c * aik - s * ajk;
                    a[[j, k]] = s * aik + c * ajk;
                }
                for k in 0..p {
                    let vki = v[[k, i]];
                    let vkj = v[[k, j]];
                    v[[k, i]] = c * vki - s * vkj;
                    v[[k, j]] = s * vki + c * vkj;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| a[[x, x]].total_cmp(&a[[y, y]]));
    let values = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vectors = Array2::zeros((p, p));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    (values, vectors)
}

fn remove_mean(x: &mut Array2<f64>) {
    let m = x.nrows() as f64;
    for mut col in x.columns_mut() {
        let mean = col.sum() / m;
        col.mapv_inplace(|v| v - mean);
    }
}

/// Modified Gram-Schmidt, applied twice. Columns that collapse are replaced
/// with fresh random directions orthogonal to ones and earlier columns.
fn orthonormalize(x: &mut Array2<f64>, rng: &mut rand_chacha::ChaCha8Rng) {
    let (m, p) = x.dim();
    for j in 0..p {
        for attempt in 0..4 {
            for _pass in 0..2 {
                for i in 0..j {
                    let proj = x.column(i).dot(&x.column(j));
                    let qi = x.column(i).to_owned();
                    x.column_mut(j).scaled_add(-proj, &qi);
                }
                let mean = x.column(j).sum() / m as f64;
                x.column_mut(j).mapv_inplace(|v| v - mean);
            }
            let norm = x.column(j).dot(&x.column(j)).sqrt();
            if norm > 1e-10 || attempt == 3 {
                x.column_mut(j).mapv_inplace(|v| v / norm.max(f64::MIN_POSITIVE));
                break;
            }
            for r in 0..m {
                x[[r, j]] = StandardNormal.sample(rng);
            }
        }
    }
}

/// The `count` smallest eigenpairs of `l`. The first pair is always the
/// constant vector with eigenvalue 0; the rest are computed iteratively in
/// its orthogonal complement.
pub fn smallest_eigenpairs(l: &Laplacian, count: usize, opts: &EigenOptions) -> Result<EigenResult> {
    let m = l.dim();
    let lm = l.matrix();
    if count == 0 || count > m {
        return Err(Error::InvalidParameter(format!(
            "cannot compute {count} eigenpairs of a {m}x{m} Laplacian"
        )));
    }
    let ones = Array1::from_elem(m, 1.0 / (m as f64).sqrt());
    let const_residual = lm.dot(&ones).dot(&lm.dot(&ones)).sqrt();
    let want = count - 1;
    if want == 0 {
        let mut vectors = Array2::zeros((m, 1));
        vectors.column_mut(0).assign(&ones);
        return Ok(EigenResult {
            values: vec![0.0],
            vectors,
            residuals: vec![const_residual],
            iterations: 0,
        });
    }

    // Gershgorin bound on the largest eigenvalue keeps cI - L positive
    // semidefinite even when W has negative entries.
    let diag_max = lm.diag().iter().copied().fold(0.0f64, f64::max);
    let gersh = (0..m)
        .map(|i| {
            lm[[i, i]]
                + lm.row(i)
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, v)| v.abs())
                    .sum::<f64>()
        })
        .fold(0.0f64, f64::max);
    let mut shift = (2.0 * diag_max).max(gersh);
    if shift <= 0.0 {
        shift = 1.0;
    }

    let p = (m - 1).min(want + 6);
    let scale = l.frobenius_norm().max(1.0);
    let tol = opts.tol * scale;
    let max_iter = opts.max_iter.unwrap_or_else(|| default_max_iter(m));

    let mut rng = seed::rng(opts.seed);
    let mut q = Array2::from_shape_simple_fn((m, p), || StandardNormal.sample(&mut rng));
    remove_mean(&mut q);
    orthonormalize(&mut q, &mut rng);

    let mut last_residual = f64::INFINITY;
    for iter in 1..=max_iter.max(1) {
        let lq = lm.dot(&q);
        let h = q.t().dot(&lq);
        let h = (&h + &h.t()) * 0.5;
        let (theta, u) = jacobi_eigen(h.view());
        let x = q.dot(&u);
        let lx = lq.dot(&u);

        let mut residuals = Vec::with_capacity(want);
        for i in 0..want {
            let r = &lx.column(i) - &(&x.column(i) * theta[i]);
            residuals.push(r.dot(&r).sqrt());
        }
        last_residual = residuals.iter().copied().fold(0.0, f64::max);
        if last_residual <= tol || p == m - 1 {
            let mut vectors = Array2::zeros((m, count));
            vectors.column_mut(0).assign(&ones);
            let mut values = vec![0.0];
            let mut all_res = vec![const_residual];
            for i in 0..want {
                let mut v = x.column(i).to_owned();
                let norm = v.dot(&v).sqrt();
                v.mapv_inplace(|e| e / norm);
                canonicalize_sign(&mut v);
                vectors.column_mut(i + 1).assign(&v);
                values.push(theta[i]);
                all_res.push(residuals[i]);
            }
            return Ok(EigenResult {
                values,
                vectors,
                residuals: all_res,
                iterations: iter,
            });
        }

        let mut y = &x * shift - &lx;
        remove_mean(&mut y);
        orthonormalize(&mut y, &mut rng);
        q = y;
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: last_residual,
    })
}

/// Eigenpair of the second-smallest Laplacian eigenvalue, sign-canonicalized.
pub fn smallest_nonconstant_eigvec(l: &Laplacian, opts: &EigenOptions) -> Result<(f64, Array1<f64>)> {
    if l.dim() < 2 {
        return Err(Error::InvalidParameter(
            "need at least 2 objects for a non-constant eigenvector".into(),
        ));
    }
    let res = smallest_eigenpairs(l, 2, opts)?;
    Ok((res.values[1], res.vector(1)))
}
