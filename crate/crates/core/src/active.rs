//! Recursive active clustering.
//!
//! Each cluster larger than `s` is split by sampling `s` of its objects,
//! running a flat clusterer on the sampled similarity submatrix, and placing
//! every other object into the seed cluster it is most similar to on
//! average. Only similarities between an object and the current sample are
//! ever queried. The heuristic variant additionally chooses `k` by eigengap,
//! drops low-degree sampled objects, and opens new clusters for objects that
//! are not similar to any seed cluster.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::flat::{eigengap_select_k, laplacian, smallest_eigenpairs, EigenOptions, FlatAlgorithm};
use crate::oracle::SimilarityOracle;
use crate::seed;
use crate::tree::{ClusterTree, FlatPartition, NodeId, ObjectId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NewClusterThreshold {
    /// Quantile of the within-seed-cluster average similarities.
    Quantile(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Heuristics {
    /// Choose `k` per split from the sample Laplacian's eigengap, with the
    /// configured `k` as the upper limit.
    pub eigengap_k: bool,
    /// Drop sampled objects whose within-sample degree is below
    /// `median - c * MAD`.
    pub degree_filter: Option<f64>,
    pub new_cluster: Option<NewClusterThreshold>,
}

impl Heuristics {
    pub fn none() -> Self {
        Heuristics::default()
    }

    /// The defaults used by the heuristic spectral variant.
    pub fn heurspec() -> Self {
        Heuristics {
            eigengap_k: true,
            degree_filter: Some(3.0),
            new_cluster: Some(NewClusterThreshold::Quantile(0.05)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveConfig {
    /// Sample size per split.
    pub s: usize,
    /// Clusters per split, or the eigengap upper limit.
    pub k: usize,
    pub seed: u64,
    pub heuristics: Heuristics,
    /// Continue inside base-case leaves with the non-active recursion.
    pub refine_leaves: bool,
    pub record_traces: bool,
}

impl ActiveConfig {
    pub fn new(s: usize, k: usize, seed: u64) -> Self {
        ActiveConfig {
            s,
            k,
            seed,
            heuristics: Heuristics::none(),
            refine_leaves: false,
            record_traces: false,
        }
    }

    pub fn with_traces(mut self) -> Self {
        self.record_traces = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.s < 2 {
            return Err(Error::InvalidParameter(format!(
                "sample size s must be >= 2, got {}",
                self.s
            )));
        }
        if self.k < 2 && !self.heuristics.eigengap_k {
            return Err(Error::InvalidParameter(format!("k must be >= 2, got {}", self.k)));
        }
        if self.k < 1 {
            return Err(Error::InvalidParameter("kmax must be >= 1".into()));
        }
        if !self.heuristics.eigengap_k && self.s < self.k {
            return Err(Error::InvalidParameter(format!("s={} must be >= k={}", self.s, self.k)));
        }
        Ok(())
    }
}

/// What happened at one split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitTrace {
    pub cluster: Vec<ObjectId>,
    pub sample: Vec<ObjectId>,
    /// Sampled objects that survived degree filtering (equal to `sample`
    /// when filtering is off).
    pub kept: Vec<ObjectId>,
    pub k: usize,
    /// Partition of `kept`, once the flat clusterer has run.
    pub seed_partition: Option<FlatPartition>,
    /// Average similarity of each placed object to every candidate cluster.
    pub scores: Vec<(ObjectId, Vec<f64>)>,
    pub children: Vec<Vec<ObjectId>>,
    /// Number of clusters opened during averaging.
    pub new_clusters: usize,
    /// `C(|S|, 2) + (|C| - |S|) * |S|`.
    pub requested_pairs: usize,
    /// Oracle counter after this split finished.
    pub queries_after: usize,
}

impl SplitTrace {
    fn start(cluster: &[ObjectId], sample: Vec<ObjectId>) -> Self {
        let (c, s) = (cluster.len(), sample.len());
        SplitTrace {
            cluster: cluster.to_vec(),
            kept: sample.clone(),
            sample,
            k: 0,
            seed_partition: None,
            scores: Vec::new(),
            children: Vec::new(),
            new_clusters: 0,
            requested_pairs: s * s.saturating_sub(1) / 2 + (c - s) * s,
            queries_after: 0,
        }
    }

    pub const TSV_HEADER: &'static str = "cluster_size\tsample_size\tk\tchild_sizes\tqueries";

    /// `cluster size, |S|, k, child sizes, queries so far`, tab-separated.
    pub fn tsv_line(&self) -> String {
        let sizes: Vec<String> = self.children.iter().map(|c| c.len().to_string()).collect();
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.cluster.len(),
            self.sample.len(),
            self.k,
            sizes.join(","),
            self.queries_after
        )
    }
}

#[derive(Debug, Clone)]
pub struct ActiveOutcome {
    pub tree: ClusterTree,
    /// One entry per split, in processing (pre-)order. Empty unless
    /// traces were requested.
    pub traces: Vec<SplitTrace>,
    pub splits: usize,
    /// Sum of `requested_pairs` over all splits.
    pub requested_pairs: usize,
}

fn check_objects(oracle: &SimilarityOracle, objects: &[ObjectId]) -> Result<Vec<ObjectId>> {
    if objects.is_empty() {
        return Err(Error::InvalidParameter("no objects to cluster".into()));
    }
    let n = oracle.n();
    let mut v = objects.to_vec();
    v.sort_unstable();
    if let Some(w) = v.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateId(w[0]));
    }
    if let Some(&id) = v.iter().find(|&&id| id >= n) {
        return Err(Error::OutOfRange { id, n });
    }
    Ok(v)
}

/// `s` objects drawn uniformly without replacement (Fisher-Yates prefix).
fn draw_sample<R: Rng>(cluster: &[ObjectId], s: usize, rng: &mut R) -> Vec<ObjectId> {
    let mut pool = cluster.to_vec();
    let s = s.min(pool.len());
    for i in 0..s {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(s);
    pool
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Index of the largest value; ties go to the smallest index.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the seed cluster with the highest mean similarity to `x`.
pub fn assign_by_average(oracle: &SimilarityOracle, x: ObjectId, seed_clusters: &[Vec<ObjectId>]) -> Result<usize> {
    if seed_clusters.is_empty() {
        return Err(Error::InvalidParameter("no seed clusters".into()));
    }
    let mut alpha = Vec::with_capacity(seed_clusters.len());
    for (j, c) in seed_clusters.iter().enumerate() {
        if c.is_empty() {
            return Err(Error::EmptySeedCluster(j));
        }
        if c.contains(&x) {
            return Err(Error::InvalidParameter(format!(
                "object {x} is already in seed cluster {j}"
            )));
        }
        alpha.push(mean(oracle.row(x, c)?.into_iter()));
    }
    Ok(argmax(&alpha))
}

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}

/// Local indices kept by the low-degree filter. The spread is the median
/// absolute deviation, falling back to the mean absolute deviation when
/// the MAD is zero.
pub fn degree_filter(w: &Array2<f64>, c: f64) -> Vec<usize> {
    let m = w.nrows();
    let deg: Vec<f64> = (0..m)
        .map(|i| (0..m).filter(|&j| j != i).map(|j| w[[i, j]]).sum())
        .collect();
    let mut sorted = deg.clone();
    sorted.sort_by(f64::total_cmp);
    let med = median(&sorted);
    let mut dev: Vec<f64> = deg.iter().map(|d| (d - med).abs()).collect();
    let mean_dev = dev.iter().sum::<f64>() / m as f64;
    dev.sort_by(f64::total_cmp);
    let mad = median(&dev);
    let spread = if mad > 0.0 { mad } else { mean_dev };
    if spread == 0.0 {
        return (0..m).collect();
    }
    let cut = med - c * spread;
    (0..m).filter(|&i| deg[i] >= cut).collect()
}

fn quantile_lower(mut v: Vec<f64>, q: f64) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let idx = ((q.clamp(0.0, 1.0)) * (v.len() - 1) as f64).floor() as usize;
    Some(v[idx])
}

struct Engine<'a> {
    oracle: &'a SimilarityOracle,
    algo: &'a dyn FlatAlgorithm,
    config: &'a ActiveConfig,
    traces: Vec<SplitTrace>,
    splits: usize,
    requested: usize,
}

enum SplitResult {
    Leaf,
    Children(Vec<Vec<ObjectId>>),
}

impl Engine<'_> {
    fn run(&mut self, objects: Vec<ObjectId>) -> Result<ClusterTree> {
        let mut tree = ClusterTree::leaf(objects.iter().copied());
        let mut work: Vec<(NodeId, u64)> = vec![(ClusterTree::ROOT, self.config.seed)];
        while let Some((node, node_seed)) = work.pop() {
            let cluster = tree.node(node).members().to_vec();
            let children = match self.split(&cluster, node_seed)? {
                SplitResult::Leaf => {
                    if self.config.refine_leaves && cluster.len() >= 2 * self.config.k.max(2) {
                        let sub = nonactive_hierarchical(
                            self.oracle,
                            &cluster,
                            self.config.k.max(2),
                            self.algo,
                            seed::derive(node_seed, u64::MAX),
                        )?;
                        for &ch in sub.root().children() {
                            tree.graft(node, sub.subtree(ch));
                        }
                    }
                    continue;
                }
                SplitResult::Children(c) => c,
            };
            let mut pending = Vec::new();
            for (ci, members) in children.into_iter().enumerate() {
                let small = members.len() < 2;
                let id = tree.add_child(node, members);
                if !small {
                    pending.push((id, seed::derive(node_seed, 2 + ci as u64)));
                }
            }
            work.extend(pending.into_iter().rev());
        }
        Ok(tree)
    }

    fn split(&mut self, cluster: &[ObjectId], node_seed: u64) -> Result<SplitResult> {
        let cfg = self.config;
        let h = &cfg.heuristics;
        if cluster.len() <= cfg.s || cluster.len() < 2 {
            return Ok(SplitResult::Leaf);
        }
        let mut rng = seed::rng(seed::derive(node_seed, 0));
        let sample = draw_sample(cluster, cfg.s, &mut rng);
        let mut trace = SplitTrace::start(cluster, sample.clone());
        let full = self.oracle.submatrix(&sample)?;

        let kept_local: Vec<usize> = match h.degree_filter {
            Some(c) => degree_filter(&full, c),
            None => (0..sample.len()).collect(),
        };
        if kept_local.is_empty() {
            return Err(Error::DegenerateSample);
        }
        let kept: Vec<ObjectId> = kept_local.iter().map(|&i| sample[i]).collect();
        let w = if kept_local.len() == sample.len() {
            full
        } else {
            Array2::from_shape_fn((kept.len(), kept.len()), |(a, b)| full[[kept_local[a], kept_local[b]]])
        };
        trace.kept = kept.clone();

        let flat_seed = seed::derive(node_seed, 1);
        let k = if h.eigengap_k {
            let count = (cfg.k + 1).min(kept.len());
            if count < 2 {
                return self.leaf_split(trace);
            }
            let eig = laplacian(&w)
                .and_then(|l| {
                    smallest_eigenpairs(
                        &l,
                        count,
                        &EigenOptions {
                            seed: flat_seed,
                            ..Default::default()
                        },
                    )
                })
                .map_err(|e| self.fail(&trace, e))?;
            let k = eigengap_select_k(&eig.sorted_values(), count - 1).map_err(|e| self.fail(&trace, e))?;
            if k == 1 {
                trace.k = 1;
                return self.leaf_split(trace);
            }
            k
        } else {
            if kept.len() < cfg.k {
                return self.leaf_split(trace);
            }
            cfg.k
        };
        trace.k = k;

        let partition = self.algo.cluster(&w, k, flat_seed).map_err(|e| self.fail(&trace, e))?;
        let groups = partition.groups();
        let seeds: Vec<Vec<ObjectId>> = groups.iter().map(|g| g.iter().map(|&i| kept[i]).collect()).collect();
        if let Some(j) = seeds.iter().position(Vec::is_empty) {
            return Err(self.fail(&trace, Error::EmptySeedCluster(j)));
        }

        let tau = match h.new_cluster {
            None => None,
            Some(NewClusterThreshold::Absolute(t)) => Some(t),
            Some(NewClusterThreshold::Quantile(q)) => {
                let w = &w;
                let within: Vec<f64> = groups
                    .iter()
                    .filter(|g| g.len() >= 2)
                    .flat_map(|g| {
                        g.iter()
                            .map(move |&a| mean(g.iter().filter(|&&b| b != a).map(|&b| w[[a, b]])))
                    })
                    .collect();
                quantile_lower(within, q)
            }
        };
        trace.seed_partition = Some(partition);

        let mut children = seeds.clone();
        let mut opened: Vec<Vec<ObjectId>> = Vec::new();
        let mut kept_sorted = kept.clone();
        kept_sorted.sort_unstable();
        let others: Vec<ObjectId> = cluster
            .iter()
            .copied()
            .filter(|x| kept_sorted.binary_search(x).is_err())
            .collect();
        for x in others {
            // `row` follows `kept` order, matching the partition's local indices
            let row = self.oracle.row(x, &kept)?;
            let mut alpha: Vec<f64> = groups.iter().map(|g| mean(g.iter().map(|&i| row[i]))).collect();
            for c in &opened {
                alpha.push(mean(self.oracle.row(x, c)?.into_iter()));
            }
            let best = argmax(&alpha);
            let target = match tau {
                Some(t) if alpha[best] < t => None,
                _ => Some(best),
            };
            match target {
                None => opened.push(vec![x]),
                Some(b) if b < seeds.len() => children[b].push(x),
                Some(b) => opened[b - seeds.len()].push(x),
            }
            if cfg.record_traces {
                trace.scores.push((x, alpha));
            }
        }
        trace.new_clusters = opened.len();
        children.extend(opened);
        for c in &mut children {
            c.sort_unstable();
        }

        self.splits += 1;
        self.requested += trace.requested_pairs;
        if cfg.record_traces {
            trace.children = children.clone();
            trace.queries_after = self.oracle.unique_pairs();
            self.traces.push(trace);
        }
        Ok(SplitResult::Children(children))
    }

    fn leaf_split(&mut self, mut trace: SplitTrace) -> Result<SplitResult> {
        if self.config.record_traces {
            trace.children = vec![trace.cluster.clone()];
            trace.queries_after = self.oracle.unique_pairs();
            self.traces.push(trace);
        }
        Ok(SplitResult::Leaf)
    }

    fn fail(&self, trace: &SplitTrace, source: Error) -> Error {
        Error::SplitFailed {
            trace: Box::new(trace.clone()),
            source: Box::new(source),
        }
    }
}

/// Recursive active clustering with a fixed number of clusters per split.
/// Any heuristics set in `config` are applied as well.
pub fn active_cluster(
    oracle: &SimilarityOracle,
    objects: &[ObjectId],
    algo: &dyn FlatAlgorithm,
    config: &ActiveConfig,
) -> Result<ActiveOutcome> {
    config.validate()?;
    let objects = check_objects(oracle, objects)?;
    let mut engine = Engine {
        oracle,
        algo,
        config,
        traces: Vec::new(),
        splits: 0,
        requested: 0,
    };
    let tree = engine.run(objects)?;
    Ok(ActiveOutcome {
        tree,
        traces: engine.traces,
        splits: engine.splits,
        requested_pairs: engine.requested,
    })
}

/// The heuristic spectral variant. `config.k` is the eigengap limit; the
/// heuristics in `config` are used as given (see [`Heuristics::heurspec`]
/// for the defaults).
pub fn heurspec_cluster(
    oracle: &SimilarityOracle,
    objects: &[ObjectId],
    algo: &dyn FlatAlgorithm,
    config: &ActiveConfig,
) -> Result<ActiveOutcome> {
    if !algo.is_spectral() {
        return Err(Error::InvalidParameter(
            "the heuristic variant needs a spectral subroutine".into(),
        ));
    }
    active_cluster(oracle, objects, algo, config)
}

/// Non-active recursion: split every cluster of at least `2k` objects with
/// the flat clusterer run on its full similarity matrix.
pub fn nonactive_hierarchical(
    oracle: &SimilarityOracle,
    objects: &[ObjectId],
    k: usize,
    algo: &dyn FlatAlgorithm,
    seed: u64,
) -> Result<ClusterTree> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("k must be >= 2, got {k}")));
    }
    let objects = check_objects(oracle, objects)?;
    let mut tree = ClusterTree::leaf(objects);
    let mut work = vec![(ClusterTree::ROOT, seed)];
    while let Some((node, node_seed)) = work.pop() {
        let cluster = tree.node(node).members().to_vec();
        if cluster.len() < 2 * k {
            continue;
        }
        let w = oracle.submatrix(&cluster)?;
        let part = algo
            .cluster(&w, k, seed::derive(node_seed, 1))
            .map_err(|e| Error::SplitFailed {
                trace: Box::new(SplitTrace::start(&cluster, cluster.clone())),
                source: Box::new(e),
            })?;
        let mut pending = Vec::new();
        for (ci, g) in part.groups().into_iter().enumerate() {
            if g.is_empty() {
                continue;
            }
            let id = tree.add_child(node, g.into_iter().map(|i| cluster[i]));
            pending.push((id, seed::derive(node_seed, 2 + ci as u64)));
        }
        work.extend(pending.into_iter().rev());
    }
    Ok(tree)
}
