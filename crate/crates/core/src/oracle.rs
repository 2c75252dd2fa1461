//! Query-counting access to pairwise similarities.
//!
//! Every similarity an algorithm looks at goes through a [`SimilarityOracle`].
//! The oracle memoizes by unordered pair and counts each distinct off-diagonal
//! pair once, which is the measurement complexity reported by experiments.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::tree::ObjectId;

/// Tolerance used when checking that a loaded matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// Normalized dot product.
    Cosine,
    /// `exp(-|x - y|^2 / (2 h^2))`.
    Rbf { bandwidth: f64 },
}

impl Kernel {
    pub fn eval(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        match *self {
            Kernel::Cosine => {
                let nx = x.dot(&x).sqrt();
                let ny = y.dot(&y).sqrt();
                if nx == 0.0 || ny == 0.0 {
                    0.0
                } else {
                    x.dot(&y) / (nx * ny)
                }
            }
            Kernel::Rbf { bandwidth } => {
                let d2: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * bandwidth * bandwidth)).exp()
            }
        }
    }
}

#[derive(Debug)]
enum Backend {
    Matrix(Array2<f64>),
    Features { rows: Array2<f64>, kernel: Kernel },
}

impl Backend {
    fn n(&self) -> usize {
        match self {
            Backend::Matrix(w) => w.nrows(),
            Backend::Features { rows, .. } => rows.nrows(),
        }
    }

    /// Raw value for `i <= j`.
    fn value(&self, i: usize, j: usize) -> f64 {
        match self {
            Backend::Matrix(w) => w[[i, j]],
            Backend::Features { rows, kernel } => kernel.eval(rows.row(i), rows.row(j)),
        }
    }
}

/// Which pairs have been revealed. A dense backend already holds every
/// value, so only a bitset is kept; kernel values are cached.
#[derive(Debug)]
enum Memo {
    Bits { words: Vec<u64>, count: usize },
    Values(HashMap<(u32, u32), f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryBudgetReport {
    pub unique_pairs_queried: usize,
    pub fraction_of_total: f64,
}

#[derive(Debug)]
pub struct SimilarityOracle {
    backend: Arc<Backend>,
    memo: Mutex<Memo>,
}

fn pair_index(n: usize, i: usize, j: usize) -> usize {
    // i < j; row-major upper triangle without diagonal
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

fn empty_memo(backend: &Backend) -> Memo {
    match backend {
        Backend::Matrix(w) => {
            let n = w.nrows();
            let pairs = n * n.saturating_sub(1) / 2;
            Memo::Bits {
                words: vec![0; pairs.div_ceil(64)],
                count: 0,
            }
        }
        Backend::Features { .. } => Memo::Values(HashMap::new()),
    }
}

impl SimilarityOracle {
    /// Wrap a precomputed square matrix. Fails if it is not symmetric within
    /// [`SYMMETRY_TOL`].
    pub fn from_matrix(w: Array2<f64>) -> Result<Self> {
        let (r, c) = w.dim();
        if r != c {
            return Err(Error::NotSquare { rows: r, cols: c });
        }
        check_symmetric(&w, SYMMETRY_TOL)?;
        Ok(Self::with_backend(Backend::Matrix(w)))
    }

    /// Evaluate `kernel` on demand over the rows of `features`.
    pub fn from_features(features: Array2<f64>, kernel: Kernel) -> Self {
        Self::with_backend(Backend::Features { rows: features, kernel })
    }

    fn with_backend(backend: Backend) -> Self {
        let memo = Mutex::new(empty_memo(&backend));
        SimilarityOracle {
            backend: Arc::new(backend),
            memo,
        }
    }

    /// A new oracle over the same data with an independent, zeroed counter.
    pub fn fork(&self) -> Self {
        SimilarityOracle {
            backend: Arc::clone(&self.backend),
            memo: Mutex::new(empty_memo(&self.backend)),
        }
    }

    pub fn n(&self) -> usize {
        self.backend.n()
    }

    fn check(&self, id: ObjectId) -> Result<()> {
        let n = self.n();
        if id >= n {
            Err(Error::OutOfRange { id, n })
        } else {
            Ok(())
        }
    }

    fn lookup(&self, memo: &mut Memo, i: usize, j: usize) -> f64 {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        if a == b {
            return self.backend.value(a, a);
        }
        match memo {
            Memo::Bits { words, count } => {
                let idx = pair_index(self.backend.n(), a, b);
                let (w, bit) = (idx / 64, 1u64 << (idx % 64));
                if words[w] & bit == 0 {
                    words[w] |= bit;
                    *count += 1;
                }
                self.backend.value(a, b)
            }
            Memo::Values(map) => *map
                .entry((a as u32, b as u32))
                .or_insert_with(|| self.backend.value(a, b)),
        }
    }

    pub fn query(&self, i: ObjectId, j: ObjectId) -> Result<f64> {
        self.check(i)?;
        self.check(j)?;
        let mut memo = self.memo.lock().expect("oracle lock poisoned");
        Ok(self.lookup(&mut memo, i, j))
    }

    /// Similarities from `x` to each of `ids`, under one lock acquisition.
    pub fn row(&self, x: ObjectId, ids: &[ObjectId]) -> Result<Vec<f64>> {
        self.check(x)?;
        for &id in ids {
            self.check(id)?;
        }
        let mut memo = self.memo.lock().expect("oracle lock poisoned");
        Ok(ids.iter().map(|&y| self.lookup(&mut memo, x, y)).collect())
    }

    /// The `|ids| x |ids|` similarity matrix of the given objects.
    pub fn submatrix(&self, ids: &[ObjectId]) -> Result<Array2<f64>> {
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for &id in ids {
            self.check(id)?;
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        let m = ids.len();
        let mut out = Array2::zeros((m, m));
        let mut memo = self.memo.lock().expect("oracle lock poisoned");
        for a in 0..m {
            for b in a..m {
                let v = self.lookup(&mut memo, ids[a], ids[b]);
                out[[a, b]] = v;
                out[[b, a]] = v;
            }
        }
        Ok(out)
    }

    pub fn unique_pairs(&self) -> usize {
        match &*self.memo.lock().expect("oracle lock poisoned") {
            Memo::Bits { count, .. } => *count,
            Memo::Values(map) => map.len(),
        }
    }

    pub fn report(&self) -> QueryBudgetReport {
        let n = self.n();
        let total = n * n.saturating_sub(1) / 2;
        let q = self.unique_pairs();
        QueryBudgetReport {
            unique_pairs_queried: q,
            fraction_of_total: if total == 0 { 0.0 } else { q as f64 / total as f64 },
        }
    }
}

pub(crate) fn check_symmetric(w: &Array2<f64>, tol: f64) -> Result<()> {
    let n = w.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (w[[i, j]], w[[j, i]]);
            if (a - b).abs() > tol || a.is_nan() != b.is_nan() {
                return Err(Error::Asymmetric { row: i, col: j, a, b });
            }
        }
    }
    Ok(())
}

/// Read the plain-text matrix format: a line with `n`, then `n` rows of `n`
/// whitespace-separated values.
pub fn read_matrix<R: BufRead>(r: R) -> Result<Array2<f64>> {
    let mut lines = r
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let parse_err = |line: usize, msg: &str| Error::Parse {
        line: line + 1,
        msg: msg.to_string(),
    };
    let (l0, first) = lines.next().ok_or_else(|| parse_err(0, "empty matrix file"))?;
    let n: usize = first?
        .trim()
        .parse()
        .map_err(|_| parse_err(l0, "first line must be n"))?;
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        let (li, line) = lines
            .next()
            .ok_or_else(|| parse_err(l0 + i + 1, "missing matrix row"))?;
        let line = line?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(li, "bad number")))
            .collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(parse_err(li, &format!("expected {n} values, found {}", vals.len())));
        }
        for (j, v) in vals.into_iter().enumerate() {
            w[[i, j]] = v;
        }
    }
    check_symmetric(&w, SYMMETRY_TOL)?;
    Ok(w)
}

pub fn write_matrix<W: Write>(w: &Array2<f64>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{}", w.nrows())?;
    for row in w.rows() {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", vals.join(" "))?;
    }
    Ok(())
}

pub fn load_matrix_file(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    read_matrix(BufReader::new(File::open(path)?))
}

pub fn save_matrix_file(w: &Array2<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_matrix(w, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Read a feature table: one object per CSV row, numeric columns. A first
/// row that does not parse as numbers is treated as a header.
pub fn read_features<R: std::io::Read>(r: R) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "non-numeric feature value".into(),
                })
            }
        }
    }
    let d = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != d) {
        return Err(Error::Parse {
            line: i + 1,
            msg: "ragged feature row".into(),
        });
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| Error::InvalidParameter(e.to_string()))
}

pub fn load_feature_file(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    read_features(File::open(path)?)
}
