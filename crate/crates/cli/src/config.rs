//! Experiment configuration files.
//!
//! Configs are TOML. Top-level keys name the experiment, the algorithms,
//! trial count and master seed; `[grid]`, `[hbm]` and `[options]` tables
//! hold the sweep, the synthetic model and run options. Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use activeclust::hbm::{evenly_spaced_levels, Band};
use activeclust::{BandMode, Bands, NoisyHbmSpec, TreeShape};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    NoiseThreshold,
    SuccessVsS,
    OutlierVsSigma,
    ProbeScaling,
    RuntimeScaling,
    SingleRun,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::NoiseThreshold => "noise_threshold",
            ExperimentKind::SuccessVsS => "success_vs_s",
            ExperimentKind::OutlierVsSigma => "outlier_vs_sigma",
            ExperimentKind::ProbeScaling => "probe_scaling",
            ExperimentKind::RuntimeScaling => "runtime_scaling",
            ExperimentKind::SingleRun => "single_run",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    ActiveSpectral,
    ActiveKmeans,
    Heurspec,
    HierSpectral,
    HierKmeans,
    SingleLinkage,
}

impl AlgorithmKind {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmKind::ActiveSpectral => "active_spectral",
            AlgorithmKind::ActiveKmeans => "active_kmeans",
            AlgorithmKind::Heurspec => "heurspec",
            AlgorithmKind::HierSpectral => "hier_spectral",
            AlgorithmKind::HierKmeans => "hier_kmeans",
            AlgorithmKind::SingleLinkage => "single_linkage",
        }
    }

    /// Uses the sample size `s`.
    pub fn is_active(&self) -> bool {
        matches!(
            self,
            AlgorithmKind::ActiveSpectral | AlgorithmKind::ActiveKmeans | AlgorithmKind::Heurspec
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub n: Vec<usize>,
    pub sigma: Vec<f64>,
    /// Explicit sample sizes. When absent, `s = ceil(s_factor * ln n)`.
    #[serde(default)]
    pub s: Option<Vec<usize>>,
    #[serde(default = "one")]
    pub s_factor: f64,
    /// Clusters per split for the fixed-k algorithms.
    #[serde(default = "two")]
    pub k: usize,
}

/// One band level: a constant or a `[lo, hi]` range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelEntry {
    Constant(f64),
    Range([f64; 2]),
}

impl LevelEntry {
    fn band(&self) -> Band {
        match *self {
            LevelEntry::Constant(v) => Band::constant(v),
            LevelEntry::Range([lo, hi]) => Band::new(lo, hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeConfig {
    #[default]
    Constant,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HbmConfig {
    /// Levels of splits in the planted balanced binary tree. When absent,
    /// `floor(log2(n / leaf_size))`.
    #[serde(default)]
    pub depth: Option<usize>,
    #[serde(default = "eight")]
    pub leaf_size: usize,
    /// Band per level, root first; the last entry applies to leaves. When
    /// absent, constant levels evenly spaced from `band_lo` to `band_hi`.
    #[serde(default)]
    pub levels: Option<Vec<LevelEntry>>,
    #[serde(default = "band_lo")]
    pub band_lo: f64,
    #[serde(default = "band_hi")]
    pub band_hi: f64,
    #[serde(default)]
    pub mode: ModeConfig,
}

impl Default for HbmConfig {
    fn default() -> Self {
        HbmConfig {
            depth: None,
            leaf_size: 8,
            levels: None,
            band_lo: 0.2,
            band_hi: 0.9,
            mode: ModeConfig::Constant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    /// Record clustering wall time. Off by default (the column is written
    /// as 0) so repeated runs give identical files; on by default for
    /// `runtime_scaling`.
    #[serde(default)]
    pub record_wall_time: Option<bool>,
    #[serde(default = "yes")]
    pub outlier_fraction: bool,
    /// Sampled triplets for the outlier fraction; 0 enumerates all.
    #[serde(default = "triplets")]
    pub outlier_triplets: usize,
    /// Eigengap limit for the heuristic variant.
    #[serde(default = "four")]
    pub kmax: usize,
    #[serde(default = "three")]
    pub degree_c: f64,
    #[serde(default = "five_pct")]
    pub tau_quantile: f64,
    #[serde(default)]
    pub refine_leaves: bool,
    #[serde(default)]
    pub gnuplot: bool,
    #[serde(default = "one_usize")]
    pub workers: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            record_wall_time: None,
            outlier_fraction: true,
            outlier_triplets: triplets(),
            kmax: 4,
            degree_c: 3.0,
            tau_quantile: 0.05,
            refine_leaves: false,
            gnuplot: false,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub algorithms: Vec<AlgorithmKind>,
    #[serde(default = "hundred")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; defaults to `results/<experiment>`.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub grid: Grid,
    #[serde(default)]
    pub hbm: HbmConfig,
    #[serde(default)]
    pub options: Options,
}

fn one() -> f64 {
    1.0
}
fn two() -> usize {
    2
}
fn four() -> usize {
    4
}
fn eight() -> usize {
    8
}
fn hundred() -> usize {
    100
}
fn one_usize() -> usize {
    1
}
fn three() -> f64 {
    3.0
}
fn five_pct() -> f64 {
    0.05
}
fn band_lo() -> f64 {
    0.2
}
fn band_hi() -> f64 {
    0.9
}
fn yes() -> bool {
    true
}
fn triplets() -> usize {
    20_000
}

/// One point of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub n: usize,
    pub sigma: f64,
    pub s: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .clone()
            .unwrap_or_else(|| PathBuf::from("results").join(self.experiment.name()))
    }

    pub fn record_wall_time(&self) -> bool {
        self.options
            .record_wall_time
            .unwrap_or(self.experiment == ExperimentKind::RuntimeScaling)
    }

    pub fn sample_sizes(&self, n: usize) -> Vec<usize> {
        match &self.grid.s {
            Some(v) => v.clone(),
            None => vec![((self.grid.s_factor * (n as f64).ln()).ceil() as usize).max(2)],
        }
    }

    /// Grid points in file order: `n` outermost, then `sigma`, then `s`.
    pub fn grid_points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &n in &self.grid.n {
            for &sigma in &self.grid.sigma {
                for s in self.sample_sizes(n) {
                    out.push(GridPoint {
                        index: out.len(),
                        n,
                        sigma,
                        s,
                    });
                }
            }
        }
        out
    }

    pub fn depth(&self, n: usize) -> usize {
        self.hbm.depth.unwrap_or_else(|| {
            let ratio = n / self.hbm.leaf_size.max(1);
            if ratio < 2 {
                1
            } else {
                ratio.ilog2() as usize
            }
        })
    }

    /// The synthetic model for `n` objects at noise `sigma`.
    pub fn hbm_spec(&self, n: usize, sigma: f64, seed: u64) -> NoisyHbmSpec {
        let depth = self.depth(n);
        let levels = match &self.hbm.levels {
            Some(v) => v.iter().map(LevelEntry::band).collect(),
            None => evenly_spaced_levels(depth, self.hbm.band_lo, self.hbm.band_hi),
        };
        NoisyHbmSpec {
            n,
            shape: TreeShape::Balanced { depth },
            bands: Bands::PerLevel(levels),
            mode: match self.hbm.mode {
                ModeConfig::Constant => BandMode::Constant,
                ModeConfig::Uniform => BandMode::Uniform,
            },
            sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if self.algorithms.is_empty() {
            return bad("algorithms must not be empty".into());
        }
        if self.grid.n.is_empty() || self.grid.sigma.is_empty() {
            return bad("grid.n and grid.sigma must not be empty".into());
        }
        if matches!(&self.grid.s, Some(v) if v.is_empty()) {
            return bad("grid.s must not be empty when given".into());
        }
        if self.grid.s_factor.is_nan() || self.grid.s_factor <= 0.0 {
            return bad("grid.s_factor must be positive".into());
        }
        if self.grid.k < 2 {
            return bad("grid.k must be >= 2".into());
        }
        if self.grid.sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return bad("grid.sigma values must be finite and >= 0".into());
        }
        if self.options.workers == 0 {
            return bad("options.workers must be >= 1".into());
        }
        if self.options.kmax < 2 {
            return bad("options.kmax must be >= 2".into());
        }
        if !(0.0..=1.0).contains(&self.options.tau_quantile) {
            return bad("options.tau_quantile must lie in [0, 1]".into());
        }
        if self.hbm.leaf_size == 0 {
            return bad("hbm.leaf_size must be >= 1".into());
        }
        let active = self.algorithms.iter().any(AlgorithmKind::is_active);
        for &n in &self.grid.n {
            if n < 2 {
                return bad(format!("grid.n values must be >= 2, got {n}"));
            }
            for s in self.sample_sizes(n) {
                if active && (s < 2 || s < self.grid.k) {
                    return bad(format!("sample size {s} must be >= 2 and >= k={}", self.grid.k));
                }
            }
            let spec = self.hbm_spec(n, 0.0, 0);
            spec.validate()
                .map_err(|e| CliError::Config(format!("hbm for n={n}: {e}")))?;
            let tree = spec
                .planted_tree()
                .map_err(|e| CliError::Config(format!("hbm for n={n}: {e}")))?;
            spec.cluster_bands(&tree)
                .map_err(|e| CliError::Config(format!("hbm for n={n}: {e}")))?;
        }
        if self.experiment == ExperimentKind::SingleRun && (self.grid_points().len() != 1 || self.algorithms.len() != 1)
        {
            return bad("single_run needs exactly one grid point and one algorithm".into());
        }
        Ok(())
    }
}
