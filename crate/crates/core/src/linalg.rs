//! Small dense helpers on top of `faer`.

use faer::{Mat, MatRef, Side};

use crate::{Error, Result};

pub fn frobenius(a: MatRef<'_, f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)] * a[(i, j)];
        }
    }
    s.sqrt()
}

/// `‖a - b‖_F / ‖b‖_F` (absolute difference when `b` vanishes).
pub fn rel_diff(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut num = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let d = a[(i, j)] - b[(i, j)];
            num += d * d;
        }
    }
    let den = frobenius(b);
    if den == 0.0 {
        num.sqrt()
    } else {
        num.sqrt() / den
    }
}

/// `‖x - xᵀ‖_F / ‖x‖_F`.
pub fn asymmetry(x: MatRef<'_, f64>) -> f64 {
    rel_diff(x, x.transpose())
}

/// `(x + xᵀ) / 2`.
pub fn symmetrize(x: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| 0.5 * (x[(i, j)] + x[(j, i)]))
}

pub fn scaled(x: &Mat<f64>, w: f64) -> Mat<f64> {
    Mat::from_fn(x.nrows(), x.ncols(), |i, j| w * x[(i, j)])
}

pub fn to_row_major(x: MatRef<'_, f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.nrows() * x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            out.push(x[(i, j)]);
        }
    }
    out
}

pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Mat<f64> {
    assert_eq!(data.len(), rows * cols);
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

/// Eigenvalues (ascending) and eigenvectors of a symmetric matrix.
pub fn sym_eigen(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("symmetric eigendecomposition: {e:?}")))?;
    let values = evd.S().column_vector().iter().copied().collect();
    Ok((values, evd.U().to_owned()))
}

pub fn sym_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::LinearAlgebra(format!("symmetric eigenvalues: {e:?}")))
}

/// Singular values in non-increasing order.
pub fn singular_values(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    a.singular_values()
        .map_err(|e| Error::LinearAlgebra(format!("singular values: {e:?}")))
}

/// Thin SVD `A = U diag(s) Vᵀ` with `s` non-increasing.
pub fn thin_svd(a: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>, Mat<f64>)> {
    let svd = a.thin_svd().map_err(|e| Error::LinearAlgebra(format!("thin SVD: {e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let u = Mat::from_fn(a.nrows(), s.len(), |i, c| svd.U()[(i, order[c])]);
    let v = Mat::from_fn(a.ncols(), s.len(), |i, c| svd.V()[(i, order[c])]);
    Ok((order.iter().map(|&i| s[i]).collect(), u, v))
}

/// Solves `Rᵀ X = B` in place for upper-triangular `R` (forward substitution).
pub fn solve_upper_transpose_in_place(r: MatRef<'_, f64>, b: &mut Mat<f64>) {
    let n = r.nrows();
    assert_eq!(b.nrows(), n);
    for col in 0..b.ncols() {
        for i in 0..n {
            let mut s = b[(i, col)];
            for k in 0..i {
                s -= r[(k, i)] * b[(k, col)];
            }
            b[(i, col)] = s / r[(i, i)];
        }
    }
}
