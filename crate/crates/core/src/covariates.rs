//! Covariate data model: validated patient covariate matrices, categorical
//! encoding of trial records and seeded synthetic instances.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DesignError, Result};
use crate::linalg::{singular_values, Matrix};
use crate::scalar::Scalar;

/// Relative singular-value threshold below which a matrix is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Numerical facts recorded when a matrix is validated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixDiagnostics {
    /// Condition number of `HᵀH`.
    pub gram_condition: f64,
    pub largest_singular_value: f64,
    pub smallest_singular_value: f64,
    /// Number of rank-deficient synthetic draws discarded before this one.
    pub synthetic_retries: u32,
}

/// An `n × p` patient covariate matrix whose first column is the intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateMatrix<T> {
    data: Matrix<T>,
    diagnostics: MatrixDiagnostics,
}

impl<T: Scalar> CovariateMatrix<T> {
    /// Validates a raw matrix.
    pub fn validate(raw: Matrix<T>) -> Result<Self> {
        let (n, p) = (raw.nrows(), raw.ncols());
        if p == 0 {
            return Err(DesignError::InvalidInput("covariate matrix has no columns".into()));
        }
        for i in 0..n {
            for j in 0..p {
                if !raw[(i, j)].is_finite() {
                    return Err(DesignError::NonFinite { row: i, col: j });
                }
            }
        }
        if n < p {
            return Err(DesignError::TooFewRows { n, p });
        }
        if let Some(row) = (0..n).find(|&i| raw[(i, 0)] != T::one()) {
            return Err(DesignError::FirstColumnNotOnes { row });
        }
        let sv = singular_values(&raw);
        let largest = sv[0];
        let smallest = sv[p - 1];
        let ratio = if largest > T::zero() {
            smallest / largest
        } else {
            T::zero()
        };
        if ratio < T::tolerance(RANK_TOLERANCE) {
            return Err(DesignError::RankDeficient {
                ratio: ratio.as_f64(),
            });
        }
        let condition = (largest / smallest).powi(2);
        Ok(Self {
            data: raw,
            diagnostics: MatrixDiagnostics {
                gram_condition: condition.as_f64(),
                largest_singular_value: largest.as_f64(),
                smallest_singular_value: smallest.as_f64(),
                synthetic_retries: 0,
            },
        })
    }

    /// Validates a list of rows.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let m = Matrix::from_rows(rows).ok_or(DesignError::NotRectangular)?;
        Self::validate(m)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.data.ncols()
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix<T> {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        self.data.row(i)
    }

    pub fn diagnostics(&self) -> &MatrixDiagnostics {
        &self.diagnostics
    }

    /// Returns `c · H` with the intercept kept at one, i.e. every
    /// non-intercept column scaled by `c`. Used for scale-invariance checks.
    pub fn scaled_covariates(&self, c: T) -> Result<Self> {
        let m = Matrix::from_fn(self.n(), self.p(), |i, j| {
            if j == 0 {
                T::one()
            } else {
                self.data[(i, j)] * c
            }
        });
        Self::validate(m)
    }

    /// Keeps the first `cols` columns.
    pub fn leading_columns(&self, cols: usize) -> Result<Self> {
        let cols = cols.min(self.p()).max(1);
        Self::validate(Matrix::from_fn(self.n(), cols, |i, j| self.data[(i, j)]))
    }

    /// Keeps the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(DesignError::InvalidInput(format!("row {bad} out of range")));
        }
        Self::validate(Matrix::from_fn(rows.len(), self.p(), |i, j| {
            self.data[(rows[i], j)]
        }))
    }
}

/// Kind of a raw trial column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    /// Two levels: the first codes to −1, the second to +1.
    Binary,
    /// Two or more levels, one of which is dropped as the reference.
    Categorical,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub levels: Vec<String>,
    /// Dropped level for categorical columns. Defaults to the last level.
    #[serde(default)]
    pub reference: Option<String>,
}

/// Encoding scheme for raw categorical trial data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub columns: Vec<ColumnSpec>,
}

impl CovariateSchema {
    pub fn check(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(DesignError::Schema("schema declares no columns".into()));
        }
        for c in &self.columns {
            let mut seen = std::collections::HashSet::new();
            if let Some(dup) = c.levels.iter().find(|l| !seen.insert(l.as_str())) {
                return Err(DesignError::Schema(format!(
                    "column {:?} repeats level {dup:?}",
                    c.name
                )));
            }
            match c.kind {
                ColumnKind::Binary if c.levels.len() != 2 => {
                    return Err(DesignError::Schema(format!(
                        "binary column {:?} must have exactly 2 levels",
                        c.name
                    )))
                }
                ColumnKind::Categorical if c.levels.len() < 2 => {
                    return Err(DesignError::Schema(format!(
                        "categorical column {:?} needs at least 2 levels",
                        c.name
                    )))
                }
                _ => {}
            }
            if let Some(r) = &c.reference {
                if !c.levels.contains(r) {
                    return Err(DesignError::Schema(format!(
                        "reference level {r:?} of column {:?} is not a declared level",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Encoded width including the intercept.
    pub fn encoded_width(&self) -> usize {
        1 + self
            .columns
            .iter()
            .map(|c| match c.kind {
                ColumnKind::Binary => 1,
                ColumnKind::Categorical => c.levels.len() - 1,
            })
            .sum::<usize>()
    }

    /// Names of the encoded columns, intercept first.
    pub fn encoded_names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        for c in &self.columns {
            match c.kind {
                ColumnKind::Binary => names.push(c.name.clone()),
                ColumnKind::Categorical => {
                    let reference = reference_level(c);
                    names.extend(
                        c.levels
                            .iter()
                            .filter(|l| *l != reference)
                            .map(|l| format!("{}={}", c.name, l)),
                    );
                }
            }
        }
        names
    }
}

fn reference_level(c: &ColumnSpec) -> &str {
    c.reference
        .as_deref()
        .unwrap_or_else(|| c.levels.last().map(String::as_str).unwrap_or(""))
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t == "NA"
}

/// Result of encoding a raw trial file.
#[derive(Clone, Debug)]
pub struct EncodedCovariates<T> {
    pub matrix: CovariateMatrix<T>,
    pub column_names: Vec<String>,
    /// Rows dropped because at least one schema cell was missing.
    pub excluded_rows: usize,
}

/// Encodes a CSV file of categorical trial records.
pub fn encode_csv<T: Scalar>(
    path: impl AsRef<Path>,
    schema: &CovariateSchema,
) -> Result<EncodedCovariates<T>> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| DesignError::Csv(format!("{}: {e}", path.as_ref().display())))?;
    encode_reader(file, schema)
}

/// Encodes CSV records from any reader; see [`encode_csv`].
pub fn encode_reader<T: Scalar, R: Read>(
    reader: R,
    schema: &CovariateSchema,
) -> Result<EncodedCovariates<T>> {
    schema.check()?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let positions = schema
        .columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h.trim() == c.name)
                .ok_or_else(|| DesignError::Schema(format!("column {:?} not in CSV header", c.name)))
        })
        .collect::<Result<Vec<_>>>()?;

    let width = schema.encoded_width();
    let mut data: Vec<T> = Vec::new();
    let mut kept = 0usize;
    let mut excluded = 0usize;
    let plus = T::one();
    let minus = -T::one();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let cells: Vec<&str> = positions
            .iter()
            .map(|&pos| record.get(pos).unwrap_or(""))
            .collect();
        if cells.iter().any(|c| is_missing(c)) {
            excluded += 1;
            continue;
        }
        let start = data.len();
        data.push(T::one());
        for (spec, cell) in schema.columns.iter().zip(&cells) {
            let value = cell.trim();
            let level = spec.levels.iter().position(|l| l == value).ok_or_else(|| {
                DesignError::UnknownLevel {
                    column: spec.name.clone(),
                    value: value.to_string(),
                    row: row_idx,
                }
            })?;
            match spec.kind {
                ColumnKind::Binary => data.push(if level == 0 { minus } else { plus }),
                ColumnKind::Categorical => {
                    let reference = reference_level(spec);
                    for l in spec.levels.iter().filter(|l| *l != reference) {
                        data.push(if l == value { plus } else { minus });
                    }
                }
            }
        }
        debug_assert_eq!(data.len() - start, width);
        kept += 1;
    }
    if kept == 0 {
        return Err(DesignError::EmptyAfterExclusion { excluded });
    }
    let m = Matrix::from_vec(kept, width, data).ok_or(DesignError::NotRectangular)?;
    Ok(EncodedCovariates {
        matrix: CovariateMatrix::validate(m)?,
        column_names: schema.encoded_names(),
        excluded_rows: excluded,
    })
}

/// Parameters of a random ±1 covariate instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, p: usize, seed: u64) -> Result<Self> {
        if n == 0 || !n.is_multiple_of(2) {
            return Err(DesignError::InvalidInput(format!("n = {n} must be even and positive")));
        }
        if p == 0 {
            return Err(DesignError::InvalidInput("p must be positive".into()));
        }
        if n < 2 * p {
            return Err(DesignError::InvalidInput(format!("n = {n} must be at least 2p = {}", 2 * p)));
        }
        Ok(Self { n, p, seed })
    }
}

const MAX_SYNTHETIC_RETRIES: u32 = 10_000;

/// Draws an intercept column plus `p − 1` i.i.d. uniform ±1 columns. A
/// rank-deficient draw is discarded and redrawn with seed `seed + 1`,
/// `seed + 2`, and so on.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> CovariateMatrix<T> {
    let SyntheticSpec { n, p, seed } = *spec;
    for retry in 0..MAX_SYNTHETIC_RETRIES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(retry as u64));
        let m = Matrix::from_fn(n, p, |_, j| {
            if j == 0 || rng.random::<bool>() {
                T::one()
            } else {
                -T::one()
            }
        });
        if let Ok(mut h) = CovariateMatrix::validate(m) {
            h.diagnostics.synthetic_retries = retry;
            return h;
        }
    }
    // With n ≥ 2p the chance of this many consecutive singular draws is nil.
    panic!("no full-rank synthetic draw for n = {n}, p = {p} after {MAX_SYNTHETIC_RETRIES} seeds");
}
