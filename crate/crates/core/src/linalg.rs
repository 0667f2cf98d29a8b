//! Thin wrappers over the dense symmetric routines in `faer`.

use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Ascending eigenvalues of a symmetric matrix (lower triangle is read).
pub fn sym_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    check_finite(a)?;
    let mut ev = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Ascending eigenvalues with the matching orthonormal eigenvectors as columns.
pub fn sym_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    check_finite(a)?;
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let u = evd.U();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[i].total_cmp(&s[j]));
    let values = order.iter().map(|&i| s[i]).collect();
    let vectors = Mat::from_fn(u.nrows(), u.ncols(), |r, c| u[(r, order[c])]);
    Ok((values, vectors))
}

/// Lower Cholesky factor, or `None` when the matrix is not numerically positive definite.
pub fn cholesky(a: MatRef<'_, f64>) -> Option<Mat<f64>> {
    let llt = a.llt(Side::Lower).ok()?;
    let l = llt.L();
    let n = l.nrows();
    Some(Mat::from_fn(n, n, |i, j| if j <= i { l[(i, j)] } else { 0.0 }))
}

pub fn max_abs_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

pub fn max_asymmetry(a: MatRef<'_, f64>) -> f64 {
    let n = a.nrows();
    let mut m = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            m = m.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    m
}

pub fn trace(a: MatRef<'_, f64>) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

fn check_finite(a: MatRef<'_, f64>) -> Result<()> {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if !a[(i, j)].is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite matrix entry at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}
