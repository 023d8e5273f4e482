//! Small dense helpers shared by the estimators and the conic solver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    symmetrize(m).symmetric_eigenvalues().min()
}

/// Rebuilds `V diag(f(λ)) Vᵀ` from an eigendecomposition, touching only the
/// columns with a nonzero mapped eigenvalue.
fn reconstruct(eig: &SymmetricEigen<f64, nalgebra::Dyn>, mapped: &[f64]) -> DMatrix<f64> {
    let n = eig.eigenvalues.len();
    let keep: Vec<usize> = (0..n).filter(|&k| mapped[k] != 0.0).collect();
    if keep.is_empty() {
        return DMatrix::zeros(n, n);
    }
    let mut v = DMatrix::zeros(n, keep.len());
    let mut vs = DMatrix::zeros(n, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        let col = eig.eigenvectors.column(k);
        v.set_column(c, &col);
        vs.set_column(c, &(col * mapped[k]));
    }
    let out = vs * v.transpose();
    symmetrize(&out)
}

/// Euclidean (Frobenius) projection of a symmetric matrix onto the PSD cone.
///
/// The input is symmetrized before the eigendecomposition.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    project_psd_with_floor(m, 0.0)
}

pub(crate) fn project_psd_with_floor(m: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let eig = symmetrize(m).symmetric_eigen();
    if floor == 0.0 {
        let negatives = eig.eigenvalues.iter().filter(|&&l| l < 0.0).count();
        if negatives == 0 {
            return symmetrize(m);
        }
        // Subtracting the negative part is cheaper when few eigenvalues are negative.
        if negatives * 2 < n {
            let neg: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.min(0.0)).collect();
            return symmetrize(m) - reconstruct(&eig, &neg);
        }
    }
    let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(floor)).collect();
    reconstruct(&eig, &clipped)
}

/// Eigenvalue-clipping repair: returns a symmetric matrix whose eigenvalues are
/// all at least `floor`, together with the largest lift applied to any eigenvalue.
pub fn psd_repair(m: &DMatrix<f64>, floor: f64) -> Result<(DMatrix<f64>, f64)> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "psd_repair expects a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !all_finite(m) {
        return Err(Error::NonFinite("psd_repair input".into()));
    }
    if !floor.is_finite() {
        return Err(Error::NonFinite("psd_repair floor".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok((m.clone(), 0.0));
    }
    let sym = symmetrize(m);
    let eig = sym.clone().symmetric_eigen();
    let lift = eig.eigenvalues.iter().map(|&l| (floor - l).max(0.0)).fold(0.0, f64::max);
    if lift == 0.0 {
        return Ok((sym, 0.0));
    }
    let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(floor)).collect();
    Ok((reconstruct(&eig, &clipped), lift))
}

pub fn frobenius_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows.len();
        DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j])
    }

    #[test]
    fn projection_clips_negative_diagonal() {
        let out = project_psd(&mat(&[&[2.0, 0.0], &[0.0, -1.0]]));
        assert!((out - mat(&[&[2.0, 0.0], &[0.0, 0.0]])).amax() < 1e-12);
    }

    #[test]
    fn projection_is_idempotent_on_psd_input() {
        let a = mat(&[&[2.0, 0.5, 0.1], &[0.5, 1.0, 0.2], &[0.1, 0.2, 0.7]]);
        assert!((project_psd(&a) - &a).amax() < 1e-12);
    }

    #[test]
    fn projection_of_swap_matrix() {
        // eigenvalues ±1 with eigenvectors (1,1)/√2 and (1,-1)/√2
        let out = project_psd(&mat(&[&[0.0, 1.0], &[1.0, 0.0]]));
        assert!((out - mat(&[&[0.5, 0.5], &[0.5, 0.5]])).amax() < 1e-12);
    }

    #[test]
    fn repair_respects_floor() {
        let (out, lift) = psd_repair(&mat(&[&[1.0, 0.0], &[0.0, -2.0]]), 0.0).unwrap();
        assert!((out - mat(&[&[1.0, 0.0], &[0.0, 0.0]])).amax() < 1e-12);
        assert!((lift - 2.0).abs() < 1e-12);

        let (id, lift) = psd_repair(&DMatrix::identity(3, 3), 0.5).unwrap();
        assert!((id - DMatrix::identity(3, 3)).amax() < 1e-12);
        assert_eq!(lift, 0.0);

        let (out, _) = psd_repair(&mat(&[&[0.0, 1.0], &[1.0, 0.0]]), 0.0).unwrap();
        assert!((out - mat(&[&[0.5, 0.5], &[0.5, 0.5]])).amax() < 1e-12);
    }

    #[test]
    fn repair_rejects_non_finite() {
        let m = mat(&[&[f64::NAN, 0.0], &[0.0, 1.0]]);
        assert!(matches!(psd_repair(&m, 0.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn repair_lifts_zero_matrix_to_floor_identity() {
        let (out, _) = psd_repair(&DMatrix::zeros(4, 4), 1e-6).unwrap();
        assert!((&out - DMatrix::identity(4, 4) * 1e-6).amax() < 1e-15);
        assert!(min_eigenvalue(&out) >= 1e-6 - 1e-12);
    }
}
