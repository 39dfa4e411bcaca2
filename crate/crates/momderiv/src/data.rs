//! Sample container, validation, and CSV ingestion.
//!
//! The estimators in this crate all consume an i.i.d. sample
//! {Z_i} = {(Y_i, X_i')'} of a scalar response and a p-dimensional design row
//! (whose first column is typically an intercept of ones).  [`Dataset`] wraps
//! the pair and enforces the structural invariants every downstream routine
//! relies on — matching lengths, n ≥ p ≥ 1, finite entries, and a design of
//! full column rank — once, at construction, so the numerics never have to
//! re-check them.
//!
//! CSV is the only ingestion format: comma-separated, `.` decimal point,
//! UTF-8, header row mandatory.  The intercept is always explicit (a flag on
//! [`load_csv`]), never inferred, so that coefficient positions are stable and
//! labeled.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{Error, Result};

/// Relative tolerance for the rank test: a column is dependent when its
/// residual after projection on the preceding ones is below this multiple of
/// the largest singular value of the design.
const RANK_TOL: f64 = 1e-10;

// ════════════════════════════════════════════════════════════════════════
// Dataset
// ════════════════════════════════════════════════════════════════════════

/// An immutable, validated regression sample: response vector y (length n),
/// design matrix x (n×p), and the p design column names.
///
/// Invariants established at construction and never violated afterwards:
/// n ≥ p ≥ 1, every entry finite, and x of full column rank (rank-revealing
/// test with tolerance 1e−10 times the largest singular value).  The struct
/// is immutable and freely shareable across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    column_names: Vec<String>,
    response_name: String,
}

impl Dataset {
    /// Builds a dataset from parts, validating all invariants.
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, column_names: Vec<String>) -> Result<Self> {
        Self::with_response_name(y, x, column_names, "y".to_string())
    }

    /// Like [`Dataset::new`], but records the response column's name (used
    /// when writing the dataset back to CSV).
    pub fn with_response_name(
        y: DVector<f64>,
        x: DMatrix<f64>,
        column_names: Vec<String>,
        response_name: String,
    ) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        if y.len() != n {
            return Err(Error::InvalidData(format!(
                "response length {} does not match design row count {n}",
                y.len()
            )));
        }
        if column_names.len() != p {
            return Err(Error::InvalidData(format!(
                "{} column names supplied for {p} design columns",
                column_names.len()
            )));
        }
        if p < 1 {
            return Err(Error::InvalidData("design has no columns".to_string()));
        }
        if n < p {
            return Err(Error::InvalidData(format!(
                "need at least as many observations as design columns, got n={n} < p={p}"
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite response value {} at row {}",
                y[i],
                i + 1
            )));
        }
        for j in 0..p {
            for i in 0..n {
                let v = x[(i, j)];
                if !v.is_finite() {
                    return Err(Error::InvalidData(format!(
                        "non-finite design value {v} at row {}, column {:?}",
                        i + 1,
                        column_names[j]
                    )));
                }
            }
        }
        let dependent = dependent_columns(&x);
        if !dependent.is_empty() {
            let names: Vec<&str> = dependent.iter().map(|&j| column_names[j].as_str()).collect();
            return Err(Error::InvalidData(format!(
                "design matrix is rank deficient; dependent column(s): {}",
                names.join(", ")
            )));
        }
        Ok(Dataset {
            y,
            x,
            column_names,
            response_name,
        })
    }

    /// Number of observations n.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of design columns p.
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Response vector.
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Design matrix.
    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// Design column names, in design order.
    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Name of the response column (as loaded, or `"y"` for synthetic data).
    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    /// Writes the dataset as CSV: response first, then the design columns,
    /// with headers.  Values use the shortest decimal representation that
    /// round-trips, so reloading reproduces them bit-exactly.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header = vec![self.response_name.clone()];
        header.extend(self.column_names.iter().cloned());
        writer.write_record(&header)?;
        for i in 0..self.n() {
            let mut record = vec![format!("{}", self.y[i])];
            for j in 0..self.p() {
                record.push(format!("{}", self.x[(i, j)]));
            }
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Identifies dependent design columns by modified Gram–Schmidt in column
/// order: a column whose residual, after projecting out the previously
/// accepted columns, has norm at most `RANK_TOL`·(largest singular value) is
/// flagged.  Returns flagged column indices (empty = full column rank).
fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let sigma_max = x
        .clone()
        .singular_values()
        .iter()
        .fold(0.0f64, |m, &s| m.max(s));
    let tol = RANK_TOL * sigma_max;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let mut v = x.column(j).clone_owned();
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        // Second pass for numerical robustness of the projection.
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let norm = v.norm();
        if norm <= tol {
            dependent.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    dependent
}

// ════════════════════════════════════════════════════════════════════════
// Index interval
// ════════════════════════════════════════════════════════════════════════

/// The admissible index interval 𝒰 = [u_lower, u_upper] over which the
/// function-valued parameter is defined: quantile levels inside (0, 1) for
/// quantile regression, response thresholds for distribution regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexInterval {
    /// Lower endpoint u_*.
    pub u_lower: f64,
    /// Upper endpoint u^*.
    pub u_upper: f64,
}

impl IndexInterval {
    /// Creates an interval, validating that both endpoints are finite and
    /// strictly ordered.
    pub fn new(u_lower: f64, u_upper: f64) -> Result<Self> {
        if !(u_lower.is_finite() && u_upper.is_finite() && u_lower < u_upper) {
            return Err(Error::InvalidArgument(format!(
                "index interval requires finite u_lower < u_upper, got [{u_lower}, {u_upper}]"
            )));
        }
        Ok(IndexInterval { u_lower, u_upper })
    }

    /// Whether u lies in the closed interval.
    pub fn contains(&self, u: f64) -> bool {
        self.u_lower <= u && u <= self.u_upper
    }
}

// ════════════════════════════════════════════════════════════════════════
// CSV ingestion
// ════════════════════════════════════════════════════════════════════════

/// Loads a dataset from a CSV file.
///
/// The named response column becomes y; every other column becomes a design
/// column, in file order; when `intercept` is set, a ones column named
/// `"intercept"` is prepended.  Cells must parse as finite decimal numbers —
/// a violation is reported with its (1-based) data row and column name.
pub fn load_csv<P: AsRef<Path>>(path: P, response_column: &str, intercept: bool) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(&path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let response_idx = headers
        .iter()
        .position(|h| h == response_column)
        .ok_or_else(|| {
            Error::InvalidData(format!(
                "response column {response_column:?} not found; file has columns: {}",
                headers.join(", ")
            ))
        })?;

    let covariate_idx: Vec<usize> = (0..headers.len()).filter(|&j| j != response_idx).collect();
    if covariate_idx.is_empty() && !intercept {
        return Err(Error::InvalidData(
            "no design columns: file has only the response and intercept is disabled".to_string(),
        ));
    }

    let mut y_vals = Vec::new();
    let mut cov_vals: Vec<Vec<f64>> = vec![Vec::new(); covariate_idx.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |j: usize| -> Result<f64> {
            let cell = record.get(j).unwrap_or("");
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::InvalidData(format!(
                    "non-numeric cell {cell:?} at data row {}, column {:?}",
                    row + 1,
                    headers[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidData(format!(
                    "non-finite value {cell:?} at data row {}, column {:?}",
                    row + 1,
                    headers[j]
                )));
            }
            Ok(v)
        };
        y_vals.push(parse(response_idx)?);
        for (slot, &j) in covariate_idx.iter().enumerate() {
            cov_vals[slot].push(parse(j)?);
        }
    }

    let n = y_vals.len();
    if n == 0 {
        return Err(Error::InvalidData("CSV file contains no data rows".to_string()));
    }

    let p = covariate_idx.len() + usize::from(intercept);
    let mut x = DMatrix::zeros(n, p);
    let mut column_names = Vec::with_capacity(p);
    let mut col = 0;
    if intercept {
        x.column_mut(0).fill(1.0);
        column_names.push("intercept".to_string());
        col = 1;
    }
    for (slot, &j) in covariate_idx.iter().enumerate() {
        for i in 0..n {
            x[(i, col)] = cov_vals[slot][i];
        }
        column_names.push(headers[j].clone());
        col += 1;
    }

    Dataset::with_response_name(
        DVector::from_vec(y_vals),
        x,
        column_names,
        response_column.to_string(),
    )
}

// ════════════════════════════════════════════════════════════════════════
// Tests
// ════════════════════════════════════════════════════════════════════════
