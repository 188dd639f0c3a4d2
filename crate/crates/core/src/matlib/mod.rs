//! Dense linear algebra used throughout the crate.
//!
//! All storage is column-major and `vec` stacks columns. Identification
//! index formulas elsewhere in the crate depend on that convention.

mod decomp;
mod funcs;
mod matrix;

use thiserror::Error;

pub use decomp::{
    cholesky, eigenvalues, inverse, max_eig, min_eig, null_space, pinv, pinv_from_svd, psd_project,
    spd_inverse, sym_eig, Lu, Svd, SymEig,
};
pub use funcs::{
    kron, matrix_exp, matrix_log, matrix_log_with, matrix_sqrt, vec, vec_inverse, vec_inverse_kron,
    LogOptions,
};
pub use matrix::{dot, norm2, Mat};

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("decomposition failed to converge: {0}")]
    DecompositionFailed(&'static str),
    #[error("principal logarithm undefined: eigenvalue {re} + {im}i is zero or on the negative real axis")]
    LogUndefined { re: f64, im: f64 },
    #[error("no real principal logarithm: reconstruction residue {residue:e}")]
    LogNotReal { residue: f64 },
    #[error("malformed matrix text: {0}")]
    Parse(String),
}

/// Writes a matrix as CSV: one row per line, `.` decimal separator and 17
/// significant digits so that values round-trip exactly.
pub fn to_csv<T: Real>(a: &Mat<T>) -> String {
    let mut out = String::new();
    for i in 0..a.rows() {
        let row: Vec<String> = a.row(i).iter().map(|v| format_real(v.as_f64())).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Parses the output of [`to_csv`]. Blank lines and lines starting with `#`
/// are skipped.
pub fn from_csv<T: Real>(text: &str) -> Result<Mat<T>, LinalgError> {
    let rows: Vec<Vec<T>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            l.split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map(T::lit)
                        .map_err(|e| LinalgError::Parse(format!("{tok:?}: {e}")))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Mat::from_rows(&rows)
}

/// Locale-independent 17-significant-digit formatting.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}
