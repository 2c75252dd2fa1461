//! Noisy hierarchical block matrices with a planted ground-truth tree.
//!
//! The ideal part `A` assigns every pair of objects a value from the band of
//! the cluster where the pair is first separated (or of the leaf that holds
//! both). Bands must nest: every child's lower end is at least the parent's
//! upper end. The noise `R` is Gaussian with standard deviation `sigma`,
//! drawn on the upper triangle and mirrored.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::seed;
use crate::tree::{ClusterTree, NodeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn new(lo: f64, hi: f64) -> Self {
        Band { lo, hi }
    }

    pub fn constant(v: f64) -> Self {
        Band { lo: v, hi: v }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BandMode {
    /// Every entry of a block equals the band midpoint.
    #[default]
    Constant,
    /// Entries drawn uniformly from the band.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeShape {
    Balanced { depth: usize },
    Explicit(ClusterTree),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bands {
    /// Index = cluster depth; split clusters use their level, leaves use the
    /// last entry.
    PerLevel(Vec<Band>),
    /// Index = node id of the planted tree.
    PerCluster(Vec<Band>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyHbmSpec {
    pub n: usize,
    pub shape: TreeShape,
    pub bands: Bands,
    pub mode: BandMode,
    pub sigma: f64,
    pub seed: u64,
}

/// `depth + 1` constant bands spaced evenly from `lo` (root) to `hi` (leaves).
pub fn evenly_spaced_levels(depth: usize, lo: f64, hi: f64) -> Vec<Band> {
    if depth == 0 {
        return vec![Band::constant(hi)];
    }
    (0..=depth)
        .map(|d| Band::constant(lo + (hi - lo) * d as f64 / depth as f64))
        .collect()
}

impl NoisyHbmSpec {
    /// Balanced binary hierarchy with evenly spaced constant bands in [0.2, 0.9].
    pub fn balanced(n: usize, depth: usize, sigma: f64, seed: u64) -> Self {
        NoisyHbmSpec {
            n,
            shape: TreeShape::Balanced { depth },
            bands: Bands::PerLevel(evenly_spaced_levels(depth, 0.2, 0.9)),
            mode: BandMode::Constant,
            sigma,
            seed,
        }
    }

    pub fn planted_tree(&self) -> Result<ClusterTree> {
        match &self.shape {
            TreeShape::Balanced { depth } => {
                if *depth >= usize::BITS as usize || self.n < (1usize << depth) {
                    return Err(Error::InvalidParameter(format!(
                        "n={} too small for a balanced tree of depth {depth}",
                        self.n
                    )));
                }
                Ok(ClusterTree::balanced(self.n, *depth))
            }
            TreeShape::Explicit(t) => {
                crate::tree::validate_tree(t, self.n)
                    .map_err(|v| Error::InvalidParameter(format!("planted tree invalid: {v}")))?;
                Ok(t.clone())
            }
        }
    }

    /// One band per node of `tree`.
    pub fn cluster_bands(&self, tree: &ClusterTree) -> Result<Vec<Band>> {
        let bands: Vec<Band> = match &self.bands {
            Bands::PerLevel(levels) => {
                if levels.is_empty() {
                    return Err(Error::InvalidBands {
                        cluster: 0,
                        reason: "no bands given".into(),
                    });
                }
                let last = levels.len() - 1;
                tree.nodes()
                    .iter()
                    .enumerate()
                    .map(|(id, c)| {
                        let lvl = if c.is_leaf() { last } else { c.depth() };
                        levels.get(lvl).copied().ok_or_else(|| Error::InvalidBands {
                            cluster: id,
                            reason: format!("no band for level {lvl}"),
                        })
                    })
                    .collect::<Result<_>>()?
            }
            Bands::PerCluster(b) => {
                if b.len() != tree.num_nodes() {
                    return Err(Error::InvalidBands {
                        cluster: 0,
                        reason: format!("{} bands for {} clusters", b.len(), tree.num_nodes()),
                    });
                }
                b.clone()
            }
        };
        check_nesting(tree, &bands)?;
        Ok(bands)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sigma must be a finite value >= 0, got {}",
                self.sigma
            )));
        }
        let tree = self.planted_tree()?;
        self.cluster_bands(&tree)?;
        Ok(())
    }
}

fn check_nesting(tree: &ClusterTree, bands: &[Band]) -> Result<()> {
    for (id, b) in bands.iter().enumerate() {
        if b.lo.is_nan() || b.hi.is_nan() || b.lo > b.hi || b.lo < 0.0 || b.hi > 1.0 {
            return Err(Error::InvalidBands {
                cluster: id,
                reason: format!("band [{}, {}] not within [0, 1]", b.lo, b.hi),
            });
        }
    }
    for (id, c) in tree.nodes().iter().enumerate() {
        for &ch in c.children() {
            if bands[ch].lo < bands[id].hi {
                return Err(Error::InvalidBands {
                    cluster: id,
                    reason: format!("child {ch} lower end {} below upper end {}", bands[ch].lo, bands[id].hi),
                });
            }
        }
    }
    Ok(())
}

/// For every pair, the node id where it is first separated (or the shared
/// leaf). Diagonal entries hold the object's leaf.
pub(crate) fn lca_nodes(tree: &ClusterTree) -> Array2<u32> {
    let n = tree.num_objects();
    let mut out = Array2::zeros((n, n));
    for (id, c) in tree.nodes().iter().enumerate() {
        if c.is_leaf() {
            for &a in c.members() {
                for &b in c.members() {
                    out[[a, b]] = id as u32;
                }
            }
        } else {
            let ch = c.children();
            for (x, &ca) in ch.iter().enumerate() {
                for &cb in &ch[x + 1..] {
                    for &a in tree.node(ca).members() {
                        for &b in tree.node(cb).members() {
                            out[[a, b]] = id as u32;
                            out[[b, a]] = id as u32;
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct HbmInstance {
    /// `W = A + R`.
    pub matrix: Array2<f64>,
    /// The noiseless `A`.
    pub ideal: Array2<f64>,
    pub truth: ClusterTree,
    pub gamma: f64,
    pub sigma: f64,
}

/// Draw an instance. Ideal entries and noise come from separate seeded
/// streams, and noise is `sigma * z` with standard normal `z`, so instances
/// that differ only in `sigma` share the same underlying draws.
pub fn generate(spec: &NoisyHbmSpec) -> Result<HbmInstance> {
    spec.validate()?;
    let truth = spec.planted_tree()?;
    let bands = spec.cluster_bands(&truth)?;
    let lca = lca_nodes(&truth);
    let n = spec.n;
    let mut ideal_rng = seed::rng(seed::derive(spec.seed, 0));
    let mut noise_rng = seed::rng(seed::derive(spec.seed, 1));
    let mut ideal = Array2::zeros((n, n));
    let mut matrix = Array2::zeros((n, n));
    for i in 0..n {
        let leaf = &bands[lca[[i, i]] as usize];
        ideal[[i, i]] = leaf.midpoint();
        matrix[[i, i]] = leaf.midpoint();
        for j in (i + 1)..n {
            let band = &bands[lca[[i, j]] as usize];
            let a = match spec.mode {
                BandMode::Constant => band.midpoint(),
                BandMode::Uniform if band.hi > band.lo => ideal_rng.random_range(band.lo..=band.hi),
                BandMode::Uniform => band.lo,
            };
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            let w = a + spec.sigma * z;
            ideal[[i, j]] = a;
            ideal[[j, i]] = a;
            matrix[[i, j]] = w;
            matrix[[j, i]] = w;
        }
    }
    Ok(HbmInstance {
        matrix,
        ideal,
        gamma: expected_gap(spec)?,
        truth,
        sigma: spec.sigma,
    })
}

/// Smallest expected separation, over all splits and children, between the
/// child's own band and the parent's cross band (band midpoints).
pub fn expected_gap(spec: &NoisyHbmSpec) -> Result<f64> {
    let tree = spec.planted_tree()?;
    let bands = spec.cluster_bands(&tree)?;
    let mut gap = f64::INFINITY;
    for (id, c) in tree.nodes().iter().enumerate() {
        for &ch in c.children() {
            gap = gap.min(bands[ch].midpoint() - bands[id].midpoint());
        }
    }
    Ok(if gap.is_finite() { gap.max(0.0) } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdealViolation {
    /// Cluster whose cross-child entries are too large.
    pub cluster: NodeId,
    /// The deeper cluster with an entry below them.
    pub child: NodeId,
    pub cross_max: f64,
    pub deeper_min: f64,
}

impl std::fmt::Display for IdealViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "cluster {}: cross-child entry {} exceeds entry {} inside child {}",
            self.cluster, self.cross_max, self.deeper_min, self.child
        )
    }
}

/// Check exact block nesting of `matrix` against `tree`: at every split, each
/// cross-child entry is at most every entry whose pair is separated one
/// level deeper (or shares a leaf one level deeper). Diagonal ignored.
pub fn validate_ideal(matrix: &Array2<f64>, tree: &ClusterTree) -> std::result::Result<(), IdealViolation> {
    let lca = lca_nodes(tree);
    let n = tree.num_objects();
    let k = tree.num_nodes();
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = lca[[i, j]] as usize;
            let v = matrix[[i, j]];
            lo[c] = lo[c].min(v);
            hi[c] = hi[c].max(v);
        }
    }
    for (id, c) in tree.nodes().iter().enumerate() {
        for &ch in c.children() {
            if hi[id] > lo[ch] {
                return Err(IdealViolation {
                    cluster: id,
                    child: ch,
                    cross_max: hi[id],
                    deeper_min: lo[ch],
                });
            }
        }
    }
    Ok(())
}
