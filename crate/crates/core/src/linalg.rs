//! Dense helpers shared by the quantizer and the clustering code.
//!
//! The quantizer forward path uses the explicit loops below rather than a
//! blocked GEMM so that results are reproducible bit-for-bit by a plain
//! reference implementation (sum over the inner index in ascending order,
//! bias added last).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Row-per-frame real matrix.
pub type Matrix = DMatrix<f64>;

/// `x · w + 1 bᵀ` computed row by row with an ascending inner sum.
pub fn affine_rows(x: &Matrix, w: &Matrix, bias: &[f64]) -> Result<Matrix> {
    if x.ncols() != w.nrows() {
        return Err(Error::DimensionMismatch {
            context: "affine input",
            expected: w.nrows(),
            got: x.ncols(),
        });
    }
    if bias.len() != w.ncols() {
        return Err(Error::DimensionMismatch {
            context: "affine bias",
            expected: w.ncols(),
            got: bias.len(),
        });
    }
    let mut out = Matrix::zeros(x.nrows(), w.ncols());
    for r in 0..x.nrows() {
        for c in 0..w.ncols() {
            let mut acc = 0.0;
            for k in 0..x.ncols() {
                acc += x[(r, k)] * w[(k, c)];
            }
            out[(r, c)] = acc + bias[c];
        }
    }
    Ok(out)
}

/// Affine map of a single vector, same summation order as [`affine_rows`].
pub fn affine_vec(x: &[f64], w: &Matrix, bias: &[f64]) -> Result<Vec<f64>> {
    if x.len() != w.nrows() {
        return Err(Error::DimensionMismatch {
            context: "affine input",
            expected: w.nrows(),
            got: x.len(),
        });
    }
    if bias.len() != w.ncols() {
        return Err(Error::DimensionMismatch {
            context: "affine bias",
            expected: w.ncols(),
            got: bias.len(),
        });
    }
    Ok((0..w.ncols())
        .map(|c| {
            let mut acc = 0.0;
            for (k, xk) in x.iter().enumerate() {
                acc += xk * w[(k, c)];
            }
            acc + bias[c]
        })
        .collect())
}

/// Copies row `r` into a `Vec`.
pub fn row_vec(m: &Matrix, r: usize) -> Vec<f64> {
    (0..m.ncols()).map(|c| m[(r, c)]).collect()
}

/// Builds a matrix from row slices, all of equal length.
pub fn from_rows(rows: &[Vec<f64>], ncols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows.len(), ncols);
    for (r, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    m
}

/// Row-major copy of the matrix data.
pub fn to_row_major(m: &Matrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}


/// Index of the row of the row-major `table` closest to `query` in squared
/// Euclidean distance; ties go to the lowest index.
pub fn nearest_row(table: &[f64], query: &[f64]) -> usize {
    if query.is_empty() {
        return 0;
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, row) in table.chunks_exact(query.len()).enumerate() {
        let d = squared_distance(query, row);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}
