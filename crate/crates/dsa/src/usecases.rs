//! Target-matrix builders and evaluation metrics for the three supported
//! processing tasks: beam steering, zero-forcing multi-user MISO, and
//! SVD-based multi-layer MIMO.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{DsaError, Result};
use crate::geometry::TestPointSet;
use crate::linalg::pseudo_inverse;

/// Floor applied when converting true zeros to dB.
pub const DB_FLOOR: f64 = -300.0;

#[derive(Debug, Clone, PartialEq)]
pub enum TargetKind {
    /// Maximize power toward one test point, null the rest.
    BeamSteer { k_star: usize, prx: f64 },
    /// Zero-forcing target `H_c·H_c†` for K = N_a users.
    ZfMiso,
    /// Channel diagonalization via the top singular triplets.
    SvdMimo { rank: usize },
}

/// Truncated SVD factors kept alongside a MIMO target.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// Top left singular vectors, K×na.
    pub u: DMatrix<Complex64>,
    /// Top singular values, descending.
    pub singular_values: DVector<f64>,
    /// Top right singular vectors, N×na.
    pub v: DMatrix<Complex64>,
    /// All singular values of the channel, descending.
    pub all_singular_values: DVector<f64>,
}

/// A desired end-to-end channel with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    pub hopt: DMatrix<Complex64>,
    pub kind: TargetKind,
    pub svd: Option<SvdFactors>,
}

/// Beam-steering target: `[H_opt]_{k,1} = √P_rx` at the steered test point,
/// zero at every other point. The explicit zeros keep the fit away from bad
/// local minima.
pub fn target_beamsteer(testpoints: &TestPointSet, k_star: usize, prx: f64) -> Result<TargetSpec> {
    let k = testpoints.len();
    if k_star >= k {
        return Err(DsaError::Domain(format!(
            "steered index {k_star} out of range for {k} test points"
        )));
    }
    if !(prx > 0.0) {
        return Err(DsaError::Domain("target received power must be positive".into()));
    }
    let mut hopt = DMatrix::zeros(k, 1);
    hopt[(k_star, 0)] = Complex64::new(prx.sqrt(), 0.0);
    Ok(TargetSpec {
        hopt,
        kind: TargetKind::BeamSteer { k_star, prx },
        svd: None,
    })
}

/// Zero-forcing MISO target `H_opt = H_c·H_c†`, the identity for a full
/// row-rank channel. Errors if the channel is row-rank deficient.
pub fn target_zf_miso(hc: &DMatrix<Complex64>) -> Result<TargetSpec> {
    let k = hc.nrows();
    let svd = hc.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-12 * smax)
        .count();
    if rank < k {
        return Err(DsaError::RankDeficient(format!(
            "zero forcing requires row rank {k}, channel has numerical rank {rank}"
        )));
    }
    let hopt = hc * pseudo_inverse(hc)?;
    Ok(TargetSpec {
        hopt,
        kind: TargetKind::ZfMiso,
        svd: None,
    })
}

/// SVD of the channel with a reproducible phase convention: the largest-
/// magnitude entry of each left singular vector is rotated to the positive
/// real axis (the matching right vector absorbs the same rotation).
fn channel_svd(hc: &DMatrix<Complex64>) -> Result<(DMatrix<Complex64>, DVector<f64>, DMatrix<Complex64>)> {
    let svd = hc.clone().svd(true, true);
    let mut u = svd
        .u
        .ok_or_else(|| DsaError::RankDeficient("SVD did not produce U".into()))?;
    let mut v = svd
        .v_t
        .ok_or_else(|| DsaError::RankDeficient("SVD did not produce Vᴴ".into()))?
        .adjoint();
    let s = DVector::from_iterator(svd.singular_values.len(), svd.singular_values.iter().cloned());
    for col in 0..u.ncols().min(v.ncols()) {
        let mut idx = 0;
        let mut best = 0.0;
        for row in 0..u.nrows() {
            let mag = u[(row, col)].norm();
            if mag > best {
                best = mag;
                idx = row;
            }
        }
        if best > 0.0 {
            let phase = u[(idx, col)] / Complex64::new(best, 0.0);
            let rot = phase.conj();
            for row in 0..u.nrows() {
                u[(row, col)] *= rot;
            }
            for row in 0..v.nrows() {
                v[(row, col)] *= rot;
            }
        }
    }
    Ok((u, s, v))
}

/// Multi-layer MIMO target from the channel's top `na` singular triplets.
/// The direct-variant target is `U·Λ`; the stored factors also drive the
/// projected objective. Errors if `na` exceeds the numerical rank.
pub fn target_svd_mimo(hc: &DMatrix<Complex64>, na: usize) -> Result<TargetSpec> {
    let (u, s, v) = channel_svd(hc)?;
    let smax = s.iter().cloned().fold(0.0f64, f64::max);
    let rank = s.iter().filter(|&&x| x > 1e-12 * smax).count();
    if na > rank {
        let gap = if na <= s.len() && s[na - 1] > 0.0 {
            format!(
                "sigma_{}/sigma_1 = {:.3e}",
                na,
                s[na - 1] / smax.max(f64::MIN_POSITIVE)
            )
        } else {
            "trailing singular values are zero".to_string()
        };
        return Err(DsaError::RankDeficient(format!(
            "requested {na} layers but numerical rank is {rank} ({gap})"
        )));
    }
    let u_top = u.columns(0, na).into_owned();
    let v_top = v.columns(0, na).into_owned();
    let s_top = DVector::from_iterator(na, s.iter().take(na).cloned());
    let hopt = &u_top * DMatrix::from_diagonal(&s_top.map(|x| Complex64::new(x, 0.0)));
    Ok(TargetSpec {
        hopt,
        kind: TargetKind::SvdMimo { rank },
        svd: Some(SvdFactors {
            u: u_top,
            singular_values: s_top,
            v: v_top,
            all_singular_values: s,
        }),
    })
}

/// Inter-user coupling in dB: entry `(k, j)` is `20·log10(|H_kj|/|H_kk|)`
/// for `j ≠ k`, 0 dB on the diagonal, clamped at [`DB_FLOOR`].
pub fn metric_user_coupling(h: &DMatrix<Complex64>) -> Result<DMatrix<f64>> {
    let k = h.nrows();
    if h.ncols() != k {
        return Err(DsaError::Dimension("user-coupling metric requires a square channel".into()));
    }
    for i in 0..k {
        if h[(i, i)].norm() == 0.0 {
            return Err(DsaError::Domain(format!("zero diagonal entry for user {i}")));
        }
    }
    Ok(DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            0.0
        } else {
            let ratio = h[(i, j)].norm() / h[(i, i)].norm();
            (20.0 * ratio.log10()).max(DB_FLOOR)
        }
    }))
}

/// Effective layer matrix after receive combining: `Λ̂ = Uᴴ·H` restricted to
/// the top `na` rows (automatic when `u` holds only the top singular
/// vectors).
pub fn metric_layer_matrix(
    u: &DMatrix<Complex64>,
    h: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    if u.nrows() != h.nrows() {
        return Err(DsaError::Dimension("U and H row counts differ".into()));
    }
    let lam = u.adjoint() * h;
    let na = h.ncols().min(lam.nrows());
    Ok(lam.rows(0, na).into_owned())
}

/// Magnitudes of a complex matrix in dB, clamped at [`DB_FLOOR`].
pub fn magnitudes_db(m: &DMatrix<Complex64>) -> DMatrix<f64> {
    m.map(|z| (20.0 * z.norm().log10()).max(DB_FLOOR))
}
