//! Tree comparison, hierarchy objectives and the sample-size bound.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::oracle::SimilarityOracle;
use crate::seed;
use crate::tree::{ClusterTree, FlatPartition, NodeId, Triplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnresolvedPolicy {
    /// Drop the triplet from the denominator.
    #[default]
    Skip,
    CountAsDisagree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripletSampling {
    Exact,
    Sampled { m: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutlierFractionMode {
    pub sampling: TripletSampling,
    pub unresolved: UnresolvedPolicy,
}

impl OutlierFractionMode {
    pub fn exact() -> Self {
        OutlierFractionMode {
            sampling: TripletSampling::Exact,
            unresolved: UnresolvedPolicy::Skip,
        }
    }

    pub fn sampled(m: usize, seed: u64) -> Self {
        OutlierFractionMode {
            sampling: TripletSampling::Sampled { m, seed },
            unresolved: UnresolvedPolicy::Skip,
        }
    }
}

/// Fraction of object triplets on which both trees pick the same pair as
/// the one grouped deeper. Both roots must hold `0..n`.
pub fn outlier_fraction(a: &ClusterTree, b: &ClusterTree, mode: &OutlierFractionMode) -> Result<f64> {
    let n = a.num_objects();
    if b.num_objects() != n {
        return Err(Error::SizeMismatch(n, b.num_objects()));
    }
    for t in [a, b] {
        if t.root().members().iter().enumerate().any(|(i, &m)| i != m) {
            return Err(Error::InvalidParameter("tree root must hold objects 0..n".into()));
        }
    }
    let (la, lb) = (a.lca_depths(), b.lca_depths());
    let mut agree = 0u64;
    let mut total = 0u64;
    let mut tally = |i, j, l| {
        let (ta, tb) = (la.triplet(i, j, l), lb.triplet(i, j, l));
        if ta == Triplet::Unresolved || tb == Triplet::Unresolved {
            if mode.unresolved == UnresolvedPolicy::CountAsDisagree {
                total += 1;
            }
            return;
        }
        total += 1;
        if ta == tb {
            agree += 1;
        }
    };
    match mode.sampling {
        TripletSampling::Exact => {
            for i in 0..n {
                for j in i + 1..n {
                    for l in j + 1..n {
                        tally(i, j, l);
                    }
                }
            }
        }
        TripletSampling::Sampled { m, seed } => {
            if m == 0 {
                return Err(Error::InvalidParameter("sampled outlier fraction needs m >= 1".into()));
            }
            if n >= 3 {
                let mut rng = seed::rng(seed);
                for _ in 0..m {
                    let i = rng.random_range(0..n);
                    let mut j = rng.random_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    let (lo, hi) = (i.min(j), i.max(j));
                    let mut l = rng.random_range(0..n - 2);
                    if l >= lo {
                        l += 1;
                    }
                    if l >= hi {
                        l += 1;
                    }
                    tally(i, j, l);
                }
            }
        }
    }
    Ok(if total == 0 { 1.0 } else { agree as f64 / total as f64 })
}

/// `ceil(ln n)`, the default size threshold for the hierarchy objectives.
pub fn default_min_size(n: usize) -> usize {
    (n.max(1) as f64).ln().ceil() as usize
}

fn qualifying(tree: &ClusterTree, min_size: usize) -> Result<Vec<NodeId>> {
    let ids: Vec<NodeId> = (0..tree.num_nodes())
        .filter(|&i| tree.node(i).len() > min_size)
        .collect();
    if ids.is_empty() {
        return Err(Error::NoQualifyingClusters(min_size));
    }
    Ok(ids)
}

/// Hierarchical k-means objective: mean over clusters larger than
/// `min_size` of the mean cosine between members and the cluster center.
/// Rows of `features` are the objects.
pub fn hkm(tree: &ClusterTree, features: &Array2<f64>, min_size: usize) -> Result<f64> {
    let ids = qualifying(tree, min_size)?;
    let norms: Vec<f64> = features.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut total = 0.0;
    for id in &ids {
        let members = tree.node(*id).members();
        let mut center = Array1::<f64>::zeros(features.ncols());
        for &m in members {
            if m >= features.nrows() {
                return Err(Error::OutOfRange {
                    id: m,
                    n: features.nrows(),
                });
            }
            center += &features.row(m);
        }
        center /= members.len() as f64;
        let cn = center.dot(&center).sqrt();
        if cn == 0.0 {
            return Err(Error::DegenerateFeatures);
        }
        let mut s = 0.0;
        for &m in members {
            if norms[m] == 0.0 {
                return Err(Error::DegenerateFeatures);
            }
            s += features.row(m).dot(&center) / (norms[m] * cn);
        }
        total += s / members.len() as f64;
    }
    Ok(total / ids.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HrcReport {
    pub value: f64,
    /// Cut contribution of every qualifying cluster.
    pub per_cluster: Vec<(NodeId, f64)>,
    /// Pairs queried by the evaluation, counted apart from any clustering run.
    pub queries: usize,
}

/// Hierarchical ratio cut: mean over clusters larger than `min_size` of
/// `sum_k K(C_k, C \ C_k) / (2|C_k|)` over the children `C_k`.
pub fn hrc(tree: &ClusterTree, oracle: &SimilarityOracle, min_size: usize) -> Result<f64> {
    hrc_report(tree, oracle, min_size).map(|r| r.value)
}

pub fn hrc_report(tree: &ClusterTree, oracle: &SimilarityOracle, min_size: usize) -> Result<HrcReport> {
    let ids = qualifying(tree, min_size)?;
    let eval = oracle.fork();
    let mut per_cluster = Vec::with_capacity(ids.len());
    for &id in &ids {
        let node = tree.node(id);
        let mut contrib = 0.0;
        for &ch in node.children() {
            let inside = tree.node(ch).members();
            let outside: Vec<usize> = node
                .members()
                .iter()
                .copied()
                .filter(|x| inside.binary_search(x).is_err())
                .collect();
            let mut cut = 0.0;
            for &a in inside {
                cut += eval.row(a, &outside)?.iter().sum::<f64>();
            }
            contrib += cut / (2.0 * inside.len() as f64);
        }
        per_cluster.push((id, contrib));
    }
    let value = per_cluster.iter().map(|(_, c)| c).sum::<f64>() / ids.len() as f64;
    Ok(HrcReport {
        value,
        per_cluster,
        queries: eval.unique_pairs(),
    })
}

/// True iff the two partitions agree up to relabeling.
pub fn exact_split_recovery(predicted: &FlatPartition, truth: &FlatPartition) -> Result<bool> {
    if predicted.len() != truth.len() {
        return Err(Error::SizeMismatch(predicted.len(), truth.len()));
    }
    Ok(predicted.canonical().labels() == truth.canonical().labels())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub n: usize,
    pub k: usize,
    /// Balance factor, at least 1.
    pub eta: f64,
    /// Gap, in `(0, 1]`.
    pub gamma: f64,
    pub c1: f64,
    pub c_eta: f64,
}

impl BoundParams {
    pub fn new(n: usize, k: usize, eta: f64, gamma: f64) -> Self {
        BoundParams {
            n,
            k,
            eta,
            gamma,
            c1: 1.0,
            c_eta: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.eta.is_nan() || self.eta < 1.0 {
            return Err(Error::InvalidParameter(format!("eta must be >= 1, got {}", self.eta)));
        }
        if !(self.c1 > 0.0 && self.c_eta > 0.0) || self.n == 0 || self.k == 0 {
            return Err(Error::InvalidParameter("n, k, c1 and c_eta must be positive".into()));
        }
        Ok(())
    }

    /// The three terms whose maximum bounds the sample size.
    pub fn terms(&self) -> Result<[f64; 3]> {
        self.validate()?;
        let ln_n = (self.n as f64).ln();
        let e1 = 1.0 + self.eta;
        Ok([
            ln_n / self.c1,
            4.0 * e1 * e1 * ln_n,
            24.0 * e1 / (self.gamma * self.gamma) * (4.0 * self.c_eta * self.k as f64 * self.n as f64).ln(),
        ])
    }
}

/// Smallest sample size the recovery guarantee asks for (natural log).
pub fn min_sample_size(p: &BoundParams) -> Result<usize> {
    let t = p.terms()?;
    Ok(t.iter().copied().fold(f64::NEG_INFINITY, f64::max).ceil().max(0.0) as usize)
}
