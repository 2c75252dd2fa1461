//! Per-grid-point aggregates, log-log slopes and noise thresholds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::runner::TrialRecord;

/// Means over the trials of one algorithm at one grid point. `*_se` are
/// standard errors: binomial for the success rate, sample standard
/// deviation over `sqrt(trials)` for the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub n: usize,
    pub sigma: f64,
    pub s: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub success_se: f64,
    pub outlier_mean: Option<f64>,
    pub outlier_se: Option<f64>,
    pub queries_mean: f64,
    pub queries_se: f64,
    pub time_mean_ms: f64,
    pub time_se_ms: f64,
    pub errors: usize,
}

pub const SUMMARY_HEADER: &str = "algorithm,n,sigma,s,trials,successes,success_rate,success_se,outlier_mean,outlier_se,queries_mean,queries_se,time_mean_ms,time_se_ms,errors";

fn mean_se(v: &[f64]) -> (f64, f64) {
    let t = v.len() as f64;
    let mean = v.iter().sum::<f64>() / t;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (t - 1.0);
    (mean, (var / t).sqrt())
}

/// Aggregate one group of records (same algorithm and grid point).
pub fn summarize_group(records: &[&TrialRecord]) -> SummaryRow {
    let first = records[0];
    let t = records.len();
    let successes = records.iter().filter(|r| r.success).count();
    let p = successes as f64 / t as f64;
    let outliers: Vec<f64> = records.iter().filter_map(|r| r.outlier_fraction).collect();
    let (om, ose) = if outliers.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_se(&outliers);
        (Some(m), Some(s))
    };
    let queries: Vec<f64> = records.iter().map(|r| r.unique_queries as f64).collect();
    let times: Vec<f64> = records.iter().map(|r| r.wall_time_ms).collect();
    let (qm, qse) = mean_se(&queries);
    let (tm, tse) = mean_se(&times);
    SummaryRow {
        algorithm: first.algorithm.clone(),
        n: first.n,
        sigma: first.sigma,
        s: first.s,
        trials: t,
        successes,
        success_rate: p,
        success_se: (p * (1.0 - p) / t as f64).sqrt(),
        outlier_mean: om,
        outlier_se: ose,
        queries_mean: qm,
        queries_se: qse,
        time_mean_ms: tm,
        time_se_ms: tse,
        errors: records.iter().filter(|r| !r.error_tag.is_empty()).count(),
    }
}

/// One row per (grid point, algorithm), in grid order.
pub fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for p in cfg.grid_points() {
        for alg in &cfg.algorithms {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.algorithm == alg.name() && r.n == p.n && r.sigma == p.sigma && r.s == p.s)
                .collect();
            if !group.is_empty() {
                rows.push(summarize_group(&group));
            }
        }
    }
    rows
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io(path, e))?;
    }
    if rows.is_empty() {
        w.write_record(SUMMARY_HEADER.split(','))
            .map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    r.deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square of the fit residuals in log space.
    pub residual: f64,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<SlopeFit, CliError> {
    if xs.len() != ys.len() {
        return Err(CliError::Config("x and y lengths differ".into()));
    }
    if xs.len() < 3 {
        return Err(CliError::Config(format!(
            "need at least 3 points for a slope, got {}",
            xs.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan() || *v <= 0.0) {
        return Err(CliError::Config("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(CliError::Config("x values must not all be equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(SlopeFit {
        slope,
        intercept,
        residual: (ss / m).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeY {
    Queries,
    Time,
}

impl std::str::FromStr for SlopeY {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "queries" => Ok(SlopeY::Queries),
            "time" => Ok(SlopeY::Time),
            other => Err(format!("unknown y column `{other}` (queries or time)")),
        }
    }
}

/// Slope of mean queries or time against `n` over the summary rows of
/// `algorithm` (or of the only algorithm present).
pub fn slope_from_rows(rows: &[SummaryRow], y: SlopeY, algorithm: Option<&str>) -> Result<SlopeFit, CliError> {
    let mut names: Vec<&str> = rows.iter().map(|r| r.algorithm.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    let alg = match algorithm {
        Some(a) => a,
        None if names.len() == 1 => names[0],
        None => {
            return Err(CliError::Config(format!(
                "several algorithms in summary ({}); pick one",
                names.join(", ")
            )))
        }
    };
    let value = |r: &SummaryRow| {
        if y == SlopeY::Queries {
            r.queries_mean
        } else {
            r.time_mean_ms
        }
    };
    let mut ns: Vec<usize> = rows.iter().filter(|r| r.algorithm == alg).map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    // several rows per n (other sigma or s) are averaged
    let per_n: Vec<(f64, f64)> = ns
        .iter()
        .map(|&n| {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.algorithm == alg && r.n == n)
                .map(value)
                .collect();
            (n as f64, vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = per_n.into_iter().unzip();
    loglog_slope(&xs, &ys)
}

pub fn fit_loglog_slope(summary: &Path, y: SlopeY, algorithm: Option<&str>) -> Result<SlopeFit, CliError> {
    slope_from_rows(&read_summary(summary)?, y, algorithm)
}

/// Smallest grid sigma at which the success rate of `algorithm` at `n`
/// falls below 0.5, or `None` if it never does.
pub fn noise_threshold(rows: &[SummaryRow], algorithm: &str, n: usize) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.algorithm == algorithm && r.n == n)
        .map(|r| (r.sigma, r.success_rate))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.into_iter().find(|&(_, p)| p < 0.5).map(|(s, _)| s)
}

/// A gnuplot script plotting the experiment's main curve from
/// `summary.csv` in the same directory.
pub fn write_gnuplot(cfg: &ExperimentConfig) -> String {
    // summary columns: 2 n, 3 sigma, 4 s, 7 success_rate, 9 outlier_mean, 11 queries_mean, 13 time_mean_ms
    let (xcol, ycol, xlabel, ylabel, log) = match cfg.experiment {
        ExperimentKind::SuccessVsS => (4, 7, "s", "first-split success", false),
        ExperimentKind::NoiseThreshold | ExperimentKind::SingleRun => (3, 7, "sigma", "first-split success", false),
        ExperimentKind::OutlierVsSigma => (3, 9, "sigma", "outlier fraction", false),
        ExperimentKind::ProbeScaling => (2, 11, "n", "unique queries", true),
        ExperimentKind::RuntimeScaling => (2, 13, "n", "time (ms)", true),
    };
    let mut out = String::new();
    out.push_str("set datafile separator ','\nset key left top\n");
    out.push_str(&format!("set xlabel '{xlabel}'\nset ylabel '{ylabel}'\n"));
    if log {
        out.push_str("set logscale xy\n");
    }
    out.push_str("set terminal pngcairo size 800,600\n");
    out.push_str(&format!("set output '{}.png'\n", cfg.experiment.name()));
    let plots: Vec<String> = cfg
        .algorithms
        .iter()
        .map(|a| {
            format!(
                "'summary.csv' using (strcol(1) eq '{0}' ? ${xcol} : 1/0):{ycol} every ::1 with linespoints title '{0}'",
                a.name()
            )
        })
        .collect();
    out.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    out
}
