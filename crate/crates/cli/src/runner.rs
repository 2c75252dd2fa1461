//! Trial execution and result files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use activeclust::active::ActiveOutcome;
use activeclust::metrics::{OutlierFractionMode, TripletSampling, UnresolvedPolicy};
use activeclust::{
    active_cluster, generate, heurspec_cluster, nonactive_hierarchical, outlier_fraction, seed, single_linkage,
    ActiveConfig, ClusterTree, FlatClusterer, Heuristics, NewClusterThreshold, QueryBudgetReport, SimilarityOracle,
    SplitTrace,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AlgorithmKind, ExperimentConfig, ExperimentKind, GridPoint};
use crate::error::CliError;
use crate::summary::{summarize, write_gnuplot, SummaryRow};

/// One algorithm run on one generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub algorithm: String,
    pub n: usize,
    pub sigma: f64,
    /// Sample size of the grid point; unused by non-active algorithms.
    pub s: usize,
    pub seed: u64,
    pub success: bool,
    pub outlier_fraction: Option<f64>,
    pub unique_queries: usize,
    pub wall_time_ms: f64,
    pub error_tag: String,
}

pub const TRIALS_HEADER: &str =
    "algorithm,n,sigma,s,seed,success,outlier_fraction,unique_queries,wall_time_ms,error_tag";

/// Seed of trial `trial` at grid point `point`.
pub fn trial_seed(master: u64, point: usize, trial: usize) -> u64 {
    seed::derive(seed::derive(master, point as u64), trial as u64)
}

/// Result of running one algorithm, before scoring.
pub struct AlgorithmRun {
    pub tree: ClusterTree,
    pub traces: Vec<SplitTrace>,
    pub report: QueryBudgetReport,
    pub wall_time_ms: f64,
}

fn active_config(cfg: &ExperimentConfig, alg: AlgorithmKind, s: usize, seed: u64, traces: bool) -> ActiveConfig {
    let mut a = ActiveConfig::new(s, cfg.grid.k, seed);
    a.refine_leaves = cfg.options.refine_leaves;
    a.record_traces = traces;
    if alg == AlgorithmKind::Heurspec {
        a.k = cfg.options.kmax;
        a.heuristics = Heuristics {
            eigengap_k: true,
            degree_filter: Some(cfg.options.degree_c),
            new_cluster: Some(NewClusterThreshold::Quantile(cfg.options.tau_quantile)),
        };
    }
    a
}

/// Run `alg` over all objects of `oracle` with a fresh query counter.
pub fn run_algorithm(
    cfg: &ExperimentConfig,
    alg: AlgorithmKind,
    oracle: &SimilarityOracle,
    s: usize,
    seed: u64,
    traces: bool,
) -> activeclust::Result<AlgorithmRun> {
    let oracle = oracle.fork();
    let objects: Vec<usize> = (0..oracle.n()).collect();
    let k = cfg.grid.k;
    let start = Instant::now();
    let (tree, traces) = match alg {
        AlgorithmKind::ActiveSpectral | AlgorithmKind::ActiveKmeans | AlgorithmKind::Heurspec => {
            let flat = if alg == AlgorithmKind::ActiveKmeans {
                FlatClusterer::kmeans()
            } else {
                FlatClusterer::spectral()
            };
            let a = active_config(cfg, alg, s, seed, traces);
            let ActiveOutcome { tree, traces, .. } = if alg == AlgorithmKind::Heurspec {
                heurspec_cluster(&oracle, &objects, &flat, &a)?
            } else {
                active_cluster(&oracle, &objects, &flat, &a)?
            };
            (tree, traces)
        }
        AlgorithmKind::HierSpectral => (
            nonactive_hierarchical(&oracle, &objects, k, &FlatClusterer::spectral(), seed)?,
            Vec::new(),
        ),
        AlgorithmKind::HierKmeans => (
            nonactive_hierarchical(&oracle, &objects, k, &FlatClusterer::kmeans(), seed)?,
            Vec::new(),
        ),
        AlgorithmKind::SingleLinkage => (single_linkage(&oracle.submatrix(&objects)?), Vec::new()),
    };
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(AlgorithmRun {
        tree,
        traces,
        report: oracle.report(),
        wall_time_ms,
    })
}

fn outlier_mode(cfg: &ExperimentConfig, trial_seed: u64) -> OutlierFractionMode {
    let sampling = match cfg.options.outlier_triplets {
        0 => TripletSampling::Exact,
        m => TripletSampling::Sampled {
            m,
            seed: seed::derive(trial_seed, 2),
        },
    };
    OutlierFractionMode {
        sampling,
        unresolved: UnresolvedPolicy::Skip,
    }
}

/// All records of one (grid point, trial) task, one per algorithm.
fn run_task(cfg: &ExperimentConfig, point: &GridPoint, trial: usize) -> Vec<TrialRecord> {
    let tseed = trial_seed(cfg.seed, point.index, trial);
    let base = |alg: AlgorithmKind| TrialRecord {
        algorithm: alg.name().to_string(),
        n: point.n,
        sigma: point.sigma,
        s: point.s,
        seed: tseed,
        success: false,
        outlier_fraction: None,
        unique_queries: 0,
        wall_time_ms: 0.0,
        error_tag: String::new(),
    };
    let instance = generate(&cfg.hbm_spec(point.n, point.sigma, tseed))
        .and_then(|inst| Ok((SimilarityOracle::from_matrix(inst.matrix.clone())?, inst)));
    let (oracle, inst) = match instance {
        Ok(v) => v,
        Err(e) => {
            return cfg
                .algorithms
                .iter()
                .map(|&a| TrialRecord {
                    error_tag: e.tag().to_string(),
                    ..base(a)
                })
                .collect()
        }
    };
    let truth_split = inst.truth.first_split();
    let mut out = Vec::with_capacity(cfg.algorithms.len());
    for &alg in &cfg.algorithms {
        let mut rec = base(alg);
        match run_algorithm(cfg, alg, &oracle, point.s, seed::derive(tseed, 1), false) {
            Ok(run) => {
                rec.unique_queries = run.report.unique_pairs_queried;
                if cfg.record_wall_time() {
                    rec.wall_time_ms = run.wall_time_ms;
                }
                rec.success = match (run.tree.first_split(), &truth_split) {
                    (Some(p), Some(t)) => activeclust::exact_split_recovery(&p, t).unwrap_or(false),
                    _ => false,
                };
                if cfg.options.outlier_fraction {
                    match outlier_fraction(&run.tree, &inst.truth, &outlier_mode(cfg, tseed)) {
                        Ok(v) => rec.outlier_fraction = Some(v),
                        Err(e) => rec.error_tag = e.tag().to_string(),
                    }
                }
            }
            Err(e) => rec.error_tag = e.tag().to_string(),
        }
        out.push(rec);
    }
    out
}

/// Run every task on `workers` threads. Records come back in task order:
/// grid point, then trial, then algorithm as listed in the config.
pub fn run_trials(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<TrialRecord>, CliError> {
    let points = cfg.grid_points();
    let tasks: Vec<(GridPoint, usize)> = points
        .iter()
        .flat_map(|p| (0..cfg.trials).map(move |t| (*p, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    let nested: Vec<Vec<TrialRecord>> = pool.install(|| tasks.par_iter().map(|(p, t)| run_task(cfg, p, *t)).collect());
    Ok(nested.into_iter().flatten().collect())
}

pub struct ExperimentOutput {
    pub trials_csv: PathBuf,
    pub summary_csv: PathBuf,
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

pub fn write_records(path: &Path, records: &[TrialRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    if records.is_empty() {
        w.write_record(TRIALS_HEADER.split(','))
            .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::io(path, e))
}

/// Run the sweep and write `trials.csv` and `summary.csv` (plus `plot.gp`
/// when enabled) into `out_dir`, or the config's output directory.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: Option<&Path>,
    workers: Option<usize>,
) -> Result<ExperimentOutput, CliError> {
    cfg.validate()?;
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir());
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let records = run_trials(cfg, workers.unwrap_or(cfg.options.workers))?;
    let summary = summarize(cfg, &records);
    let trials_csv = dir.join("trials.csv");
    let summary_csv = dir.join("summary.csv");
    write_records(&trials_csv, &records)?;
    crate::summary::write_summary(&summary_csv, &summary)?;
    if cfg.options.gnuplot {
        let gp = dir.join("plot.gp");
        fs::write(&gp, write_gnuplot(cfg)).map_err(|e| CliError::io(&gp, e))?;
    }
    Ok(ExperimentOutput {
        trials_csv,
        summary_csv,
        records,
        summary,
    })
}

pub struct SingleOutput {
    pub tree_file: PathBuf,
    pub trace_file: PathBuf,
    pub budget_file: PathBuf,
    pub report: QueryBudgetReport,
    pub tree: ClusterTree,
}

/// One algorithm on one instance, keeping the tree, split trace and query
/// report.
pub fn run_single(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<SingleOutput, CliError> {
    cfg.validate()?;
    if cfg.experiment != ExperimentKind::SingleRun {
        return Err(CliError::Config("`single` needs experiment = \"single_run\"".into()));
    }
    let point = cfg.grid_points()[0];
    let alg = cfg.algorithms[0];
    let tseed = trial_seed(cfg.seed, 0, 0);
    let inst = generate(&cfg.hbm_spec(point.n, point.sigma, tseed)).map_err(|e| CliError::Config(e.to_string()))?;
    let oracle = SimilarityOracle::from_matrix(inst.matrix).map_err(|e| CliError::Config(e.to_string()))?;
    let run = run_algorithm(cfg, alg, &oracle, point.s, seed::derive(tseed, 1), true)
        .map_err(|e| CliError::Config(format!("{} failed: {e}", alg.name())))?;

    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir());
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let tree_file = dir.join("tree.txt");
    fs::write(&tree_file, run.tree.to_text()).map_err(|e| CliError::io(&tree_file, e))?;
    let trace_file = dir.join("trace.tsv");
    let mut trace = String::from(SplitTrace::TSV_HEADER);
    trace.push('\n');
    for t in &run.traces {
        trace.push_str(&t.tsv_line());
        trace.push('\n');
    }
    fs::write(&trace_file, trace).map_err(|e| CliError::io(&trace_file, e))?;
    let budget_file = dir.join("budget.txt");
    let budget = format!(
        "algorithm\t{}\nn\t{}\nunique_pairs_queried\t{}\nfraction_of_total\t{}\n",
        alg.name(),
        point.n,
        run.report.unique_pairs_queried,
        run.report.fraction_of_total
    );
    fs::write(&budget_file, budget).map_err(|e| CliError::io(&budget_file, e))?;
    Ok(SingleOutput {
        tree_file,
        trace_file,
        budget_file,
        report: run.report,
        tree: run.tree,
    })
}
