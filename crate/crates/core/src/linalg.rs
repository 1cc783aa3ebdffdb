//! Small dense linear-algebra helpers shared by the numerical modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{config_err, Result};

/// Eigenvalue floor used when deciding whether a symmetric matrix is PSD.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Pivot threshold for the PSD factorization; smaller pivots are treated as zero.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = 1.0 + m.amax();
    (m - m.transpose()).amax() <= tol * scale
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

/// Largest eigenvalue modulus of a square real matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Checks that `m` is square, symmetric and positive semidefinite.
pub fn ensure_psd(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if !m.is_square() {
        return config_err(format!("{name} must be square, got {}x{}", m.nrows(), m.ncols()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return config_err(format!("{name} has non-finite entries"));
    }
    if !is_symmetric(m, 1e-12) {
        return config_err(format!("{name} must be symmetric"));
    }
    let min_eig = min_symmetric_eigenvalue(m);
    if min_eig < -PSD_TOLERANCE {
        return config_err(format!("{name} must be positive semidefinite (min eigenvalue {min_eig:e})"));
    }
    Ok(())
}

/// Lower-triangular `L` with `L Lᵀ = Σ` for a symmetric PSD `Σ`.
///
/// Unlike a plain Cholesky decomposition this accepts singular matrices:
/// pivots at or below [`PIVOT_TOLERANCE`] (relative to the largest diagonal
/// entry) zero their column.
pub fn psd_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_psd(sigma, "covariance")?;
    let n = sigma.nrows();
    let scale = sigma.diagonal().amax().max(1.0);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = sigma[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot <= PIVOT_TOLERANCE * scale {
            if pivot < -1e-8 * scale {
                return config_err(format!("covariance factorization hit negative pivot {pivot:e}"));
            }
            continue;
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        for i in (j + 1)..n {
            let mut s = sigma[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / diag;
        }
    }
    Ok(l)
}

/// Builds a matrix from row-major nested vectors.
pub fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return config_err(format!("{name}: rows have unequal lengths"));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Inverse of [`matrix_from_rows`].
pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn vector_to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}
