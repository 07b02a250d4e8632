//! Small dense helpers over nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub fn from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(r, c, |i, j| rows[i][j])
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// `a^t` by repeated squaring.
pub fn mat_pow(a: &DMatrix<f64>, mut t: u64) -> DMatrix<f64> {
    let mut result = DMatrix::identity(a.nrows(), a.ncols());
    let mut base = a.clone();
    while t > 0 {
        if t & 1 == 1 {
            result = &result * &base;
        }
        t >>= 1;
        if t > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Solves `a x = b` by LU with partial pivoting.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let x = a.clone().lu().solve(b).ok_or_else(|| Error::Numeric("singular system".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("solution is not finite".into()));
    }
    Ok(x)
}
