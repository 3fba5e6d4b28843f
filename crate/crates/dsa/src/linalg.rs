//! Small dense linear-algebra helpers shared by the network and optimizer
//! modules: symmetric matrix roots with eigenvalue clamping, SVD-based
//! pseudo-inverse, and real→complex promotion.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{DsaError, Result};

pub fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    m.map(|z| z.re)
}

pub fn imag_part(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    m.map(|z| z.im)
}

/// Frobenius-norm relative distance `‖a - b‖_F / ‖b‖_F`.
pub fn rel_frobenius(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Symmetric PSD square root and inverse square root via eigendecomposition.
///
/// Eigenvalues in `[-1e-10·scale, 0)` are clamped to zero to absorb roundoff;
/// anything below that is a hard model violation. The inverse root requires
/// strictly positive (post-clamp) eigenvalues.
pub struct SymmetricRoots {
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
}

pub fn spd_roots(m: &DMatrix<f64>) -> Result<SymmetricRoots> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(DsaError::Dimension("square matrix required".into()));
    }
    // Symmetrize to keep the eigensolver honest about roundoff asymmetry.
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let tol = 1e-10 * max_ev.max(1.0);
    let mut clamped = eig.eigenvalues.clone();
    for ev in clamped.iter_mut() {
        if *ev < -tol {
            return Err(DsaError::ModelViolation(format!(
                "matrix not positive semi-definite: eigenvalue {ev:.3e} below -{tol:.1e}"
            )));
        }
        if *ev < 0.0 {
            *ev = 0.0;
        }
    }
    if clamped.iter().any(|&ev| ev <= 0.0) {
        return Err(DsaError::ModelViolation(
            "matrix is singular after clamping; inverse square root undefined".into(),
        ));
    }
    let q = &eig.eigenvectors;
    let sqrt_diag = DMatrix::from_diagonal(&clamped.map(f64::sqrt));
    let inv_sqrt_diag = DMatrix::from_diagonal(&clamped.map(|ev| 1.0 / ev.sqrt()));
    Ok(SymmetricRoots {
        sqrt: q * sqrt_diag * q.transpose(),
        inv_sqrt: q * inv_sqrt_diag * q.transpose(),
        eigenvalues: clamped,
    })
}

/// Moore-Penrose pseudo-inverse via SVD, truncating singular values below
/// `1e-12 · σ_max`.
pub fn pseudo_inverse(m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let svd = m.clone().svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| DsaError::RankDeficient("SVD did not produce U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| DsaError::RankDeficient("SVD did not produce Vᴴ".into()))?;
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return Err(DsaError::RankDeficient("zero matrix has no pseudo-inverse".into()));
    }
    let tol = 1e-12 * smax;
    let inv_s = DVector::from_iterator(
        svd.singular_values.len(),
        svd.singular_values
            .iter()
            .map(|&s| if s > tol { Complex64::new(1.0 / s, 0.0) } else { Complex64::new(0.0, 0.0) }),
    );
    // pinv = V Σ⁺ Uᴴ
    Ok(v_t.adjoint() * DMatrix::from_diagonal(&inv_s) * u.adjoint())
}
