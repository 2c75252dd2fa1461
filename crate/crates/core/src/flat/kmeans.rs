//! Lloyd's algorithm with k-means++ seeding and restarts.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;
use crate::tree::FlatPartition;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    /// Lloyd iterations per restart.
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iter: 100,
            restarts: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub wcss: f64,
    /// WCSS after every iteration of the winning restart.
    pub history: Vec<f64>,
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn seed_centroids<R: Rng>(points: ArrayView2<f64>, k: usize, rng: &mut R) -> Vec<usize> {
    let m = points.nrows();
    let mut chosen = vec![rng.random_range(0..m)];
    let mut d2: Vec<f64> = (0..m).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = m - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    if target < d {
                        pick = i;
                        break;
                    }
                    target -= d;
                }
            }
            // rounding can leave `pick` on a zero-weight point; walk back to a positive one
            while d2[pick] == 0.0 && pick > 0 {
                pick -= 1;
            }
            pick
        } else {
            // every point coincides with a chosen centroid
            let free: Vec<usize> = (0..m).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for i in 0..m {
            d2[i] = d2[i].min(sq_dist(points.row(i), points.row(next)));
        }
    }
    chosen
}

fn nearest(point: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn update_centroids(points: ArrayView2<f64>, labels: &[usize], k: usize) -> Array2<f64> {
    let mut c = Array2::zeros((k, points.ncols()));
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        c.row_mut(l).scaled_add(1.0, &points.row(i));
        counts[l] += 1;
    }
    for (j, &cnt) in counts.iter().enumerate() {
        if cnt > 0 {
            c.row_mut(j).mapv_inplace(|v| v / cnt as f64);
        }
    }
    c
}

fn wcss(points: ArrayView2<f64>, labels: &[usize], centroids: &Array2<f64>) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(points.row(i), centroids.row(l)))
        .sum()
}

fn lloyd_run<R: Rng>(points: ArrayView2<f64>, k: usize, max_iter: usize, rng: &mut R) -> KMeansFit {
    let m = points.nrows();
    let init = seed_centroids(points, k, rng);
    let mut centroids = Array2::zeros((k, points.ncols()));
    for (j, &i) in init.iter().enumerate() {
        centroids.row_mut(j).assign(&points.row(i));
    }
    let mut labels = vec![usize::MAX; m];
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut dist = vec![0.0; m];
        let mut next = vec![0; m];
        for i in 0..m {
            let (j, d) = nearest(points.row(i), &centroids);
            next[i] = j;
            dist[i] = d;
        }
        // repair empty clusters with the point farthest from its centroid
        let mut sizes = vec![0usize; k];
        for &l in &next {
            sizes[l] += 1;
        }
        for j in 0..k {
            if sizes[j] > 0 {
                continue;
            }
            let far = (0..m)
                .filter(|&i| sizes[next[i]] > 1)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                .expect("k <= m leaves a donor cluster");
            sizes[next[far]] -= 1;
            next[far] = j;
            sizes[j] = 1;
            dist[far] = 0.0;
        }
        let changed = next != labels;
        labels = next;
        centroids = update_centroids(points, &labels, k);
        history.push(wcss(points, &labels, &centroids));
        if !changed {
            break;
        }
    }
    let w = *history.last().expect("at least one iteration");
    KMeansFit {
        labels,
        centroids,
        wcss: w,
        history,
    }
}

/// Best-of-`restarts` Lloyd fit of the rows of `points`.
pub fn kmeans_lloyd(points: ArrayView2<f64>, k: usize, opts: &KMeansOptions) -> Result<KMeansFit> {
    let m = points.nrows();
    if k == 0 || k > m {
        return Err(Error::InvalidParameter(format!(
            "k-means needs 1 <= k <= m, got k={k}, m={m}"
        )));
    }
    if opts.max_iter == 0 {
        return Err(Error::InvalidParameter("k-means needs at least one iteration".into()));
    }
    let mut best: Option<KMeansFit> = None;
    for r in 0..opts.restarts.max(1) {
        let mut rng = seed::rng(seed::derive(opts.seed, r as u64));
        let fit = lloyd_run(points, k, opts.max_iter, &mut rng);
        if best.as_ref().is_none_or(|b| fit.wcss < b.wcss) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// k-means on the rows of a similarity matrix, each row a point in `m`
/// dimensions.
pub fn kmeans_rows(w: &Array2<f64>, k: usize, opts: &KMeansOptions) -> Result<FlatPartition> {
    let fit = kmeans_lloyd(w.view(), k, opts)?;
    FlatPartition::new(fit.labels, k)
}
