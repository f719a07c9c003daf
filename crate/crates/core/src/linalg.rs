//! Small dense matrix helpers shared by the estimation and optimizer code.

use nalgebra::{DMatrix, SymmetricEigen};

/// Covariance-valued matrices (P_k, Y_k, the average bound, the target).
pub type CovMatrix = DMatrix<f64>;

/// Relative PSD tolerance: a matrix counts as PSD when its smallest eigenvalue
/// is at least `-PSD_TOL * max(trace, 1e-300)`.
pub const PSD_TOL: f64 = 1e-9;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// PSD test with a tolerance relative to `scale` (usually a trace).
pub fn is_psd_scaled(m: &DMatrix<f64>, scale: f64) -> bool {
    min_eigenvalue(m) >= -PSD_TOL * scale.abs().max(f64::MIN_POSITIVE)
}

pub fn is_psd(m: &DMatrix<f64>) -> bool {
    is_psd_scaled(m, m.trace())
}

/// Löwner order `lhs ⪯ rhs`, tolerance relative to `trace(rhs)`.
pub fn loewner_le(lhs: &DMatrix<f64>, rhs: &DMatrix<f64>) -> bool {
    is_psd_scaled(&(rhs - lhs), rhs.trace())
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() <= rel_tol * scale
}

/// Spectral radius, max |λ| over the complex spectrum.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Numerical rank with singular values below `rel_tol * σ_max` treated as zero.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Symmetric PSD square root; negative eigenvalues from roundoff are clamped.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
