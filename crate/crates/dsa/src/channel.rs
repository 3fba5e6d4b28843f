//! Radio-channel transimpedance matrices and end-to-end channel assembly.
//!
//! `H_c` maps element currents to received signals (matched load, normalized
//! to R_L = 1 Ohm). The far-field entry for test point `t_k`, element `n`,
//! displacement `r = t_k - p_n` is
//!
//! ```text
//! [H_c]_{k,n} = sqrt(λ²·G_r/(4πη)) · l_n · Ω̂_kᵀ · G_ff(r) · Ω_n
//! ```
//!
//! which folds the effective aperture `A_eff = λ²G_r/(4π)` of the receive
//! antenna into the radiative dyadic. A single matched Hertzian dipole then
//! reproduces the Friis link budget with transmit gain 3/2.
//!
//! The composite non-line-of-sight model treats each scatter point as an
//! isotropic point re-scatterer that preserves the transverse field
//! component, with per-hop radiative spreading and a unit-magnitude complex
//! reflection coefficient; its absolute scale is a modeling convention.

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::em::{green_farfield, PhysicalConstants};
use crate::error::{DsaError, Result};
use crate::geometry::{ring_points_at_angles, DsaGeometry, TestPointSet};
use crate::network::{LoadVector, NetworkState};

/// Where a transimpedance matrix came from.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelMeta {
    /// Free-space far field toward a set of test points.
    FarField { rx_gain: f64, points: usize },
    /// Composite re-scattered channel toward a receive array.
    Nlos { paths: usize, rx_elements: usize },
}

/// A `K×N` current-to-received-signal map.
#[derive(Debug, Clone, PartialEq)]
pub struct Transimpedance {
    pub hc: DMatrix<Complex64>,
    pub meta: ChannelMeta,
}

impl Transimpedance {
    pub fn n_points(&self) -> usize {
        self.hc.nrows()
    }

    pub fn n_elements(&self) -> usize {
        self.hc.ncols()
    }
}

/// Receive uniform linear array used by the composite channel.
#[derive(Debug, Clone, PartialEq)]
pub struct RxUla {
    pub center: Vector3<f64>,
    /// Unit vector along the array axis.
    pub axis: Vector3<f64>,
    /// Element polarization.
    pub orientation: Vector3<f64>,
    pub elements: usize,
    pub spacing: f64,
    pub gain: f64,
}

impl RxUla {
    pub fn element_positions(&self) -> Vec<Vector3<f64>> {
        let axis = self.axis.normalize();
        (0..self.elements)
            .map(|i| self.center + axis * ((i as f64 - (self.elements as f64 - 1.0) / 2.0) * self.spacing))
            .collect()
    }
}

/// A pure non-line-of-sight scene: point re-scatterers plus a receive array.
#[derive(Debug, Clone, PartialEq)]
pub struct NlosScene {
    pub scatter_points: Vec<Vector3<f64>>,
    pub reflection_coeffs: Vec<Complex64>,
    pub rx: RxUla,
}

impl NlosScene {
    pub fn validate(&self, geom: &DsaGeometry) -> Result<()> {
        if self.scatter_points.is_empty() {
            return Err(DsaError::Domain("scene has no propagation paths".into()));
        }
        if self.scatter_points.len() != self.reflection_coeffs.len() {
            return Err(DsaError::Dimension(
                "one reflection coefficient per scatter point required".into(),
            ));
        }
        let limit = 10.0 * geom.lambda;
        for s in &self.scatter_points {
            for d in geom.elements() {
                if (s - d.position).norm() < limit {
                    return Err(DsaError::Domain(
                        "scatter point within 10λ of the array".into(),
                    ));
                }
            }
            for u in self.rx.element_positions() {
                if (s - u).norm() < limit {
                    return Err(DsaError::Domain(
                        "scatter point within 10λ of the receiver".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn rx_aperture_factor(lambda: f64, gain: f64, eta: f64) -> f64 {
    (lambda * lambda * gain / (4.0 * PI * eta)).sqrt()
}

/// Far-field transimpedance toward a test-point set. Errors if any point is
/// within 10λ of any element.
pub fn transimpedance_farfield(
    geom: &DsaGeometry,
    testpoints: &TestPointSet,
) -> Result<Transimpedance> {
    if testpoints.points.len() != testpoints.rx_orientations.len() {
        return Err(DsaError::Dimension(
            "one receive orientation per test point required".into(),
        ));
    }
    let eta = PhysicalConstants::default().eta;
    let lambda = geom.lambda;
    let aperture = rx_aperture_factor(lambda, testpoints.rx_gain, eta);
    let elements: Vec<_> = geom.elements().cloned().collect();
    let limit = 10.0 * lambda;

    let rows: Vec<Vec<Complex64>> = testpoints
        .points
        .par_iter()
        .zip(testpoints.rx_orientations.par_iter())
        .map(|(t, omega_rx)| {
            elements
                .iter()
                .map(|d| {
                    let r = t - d.position;
                    if r.norm() < limit {
                        return Err(DsaError::Domain(format!(
                            "test point within 10λ of an element (|r| = {:.3e})",
                            r.norm()
                        )));
                    }
                    let g = green_farfield(&r, lambda)?;
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..3 {
                        for j in 0..3 {
                            acc += omega_rx[i] * g[(i, j)] * d.orientation[j];
                        }
                    }
                    Ok(acc * aperture * d.length)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let k = testpoints.len();
    let n = elements.len();
    let hc = DMatrix::from_fn(k, n, |i, j| rows[i][j]);
    Ok(Transimpedance {
        hc,
        meta: ChannelMeta::FarField {
            rx_gain: testpoints.rx_gain,
            points: k,
        },
    })
}

/// Composite transimpedance through point re-scatterers (no direct path).
/// Each path contributes `G_ff(rx←s) · γ·(λ²/η) · G_ff(s←tx)` chained through
/// the transverse projectors of both hops.
pub fn transimpedance_nlos(geom: &DsaGeometry, scene: &NlosScene) -> Result<Transimpedance> {
    scene.validate(geom)?;
    let eta = PhysicalConstants::default().eta;
    let lambda = geom.lambda;
    let aperture = rx_aperture_factor(lambda, scene.rx.gain, eta);
    let rescatter_scale = lambda * lambda / eta;
    let elements: Vec<_> = geom.elements().cloned().collect();
    let rx_positions = scene.rx.element_positions();
    let omega_rx = scene.rx.orientation.normalize();

    let k = rx_positions.len();
    let n = elements.len();
    let mut hc = DMatrix::zeros(k, n);
    for (s, gamma) in scene.scatter_points.iter().zip(&scene.reflection_coeffs) {
        // First hop: element -> scatter point, keeps the full 3-vector field.
        let mut first = Vec::with_capacity(n);
        for d in &elements {
            let g1 = green_farfield(&(s - d.position), lambda)?;
            let mut v = Vector3::<Complex64>::zeros();
            for i in 0..3 {
                for j in 0..3 {
                    v[i] += g1[(i, j)] * d.orientation[j];
                }
            }
            first.push(v * Complex64::new(d.length, 0.0));
        }
        // Second hop: scatter point -> receive element, projected on the
        // receive polarization.
        for (row, u) in rx_positions.iter().enumerate() {
            let g2 = green_farfield(&(u - s), lambda)?;
            let mut w = Vector3::<Complex64>::zeros();
            for i in 0..3 {
                for j in 0..3 {
                    w[j] += omega_rx[i] * g2[(i, j)];
                }
            }
            for (col, f) in first.iter().enumerate() {
                let chained = w[0] * f[0] + w[1] * f[1] + w[2] * f[2];
                hc[(row, col)] += gamma * rescatter_scale * aperture * chained;
            }
        }
    }
    Ok(Transimpedance {
        hc,
        meta: ChannelMeta::Nlos {
            paths: scene.scatter_points.len(),
            rx_elements: k,
        },
    })
}

/// End-to-end baseband channel `H = H_c · W_em · W_d`.
pub fn end_to_end(
    hc: &DMatrix<Complex64>,
    wem: &DMatrix<Complex64>,
    wd: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    if hc.ncols() != wem.nrows() || wem.ncols() != wd.nrows() {
        return Err(DsaError::Dimension(format!(
            "H_c ({}x{}) · W_em ({}x{}) · W_d ({}x{}) not conformable",
            hc.nrows(),
            hc.ncols(),
            wem.nrows(),
            wem.ncols(),
            wd.nrows(),
            wd.ncols()
        )));
    }
    Ok(hc * wem * wd)
}

/// Friis-referenced transmit gain (dB) per steering-plane angle for a load
/// configuration and digital precoder, with the information vector convention
/// `E[xxᴴ] = (P_tx/N_a)·I`:
///
/// `G(φ) = ‖H_{k,:}‖² · (4πd/λ)² / (N_a · G_r)`.
///
/// The gain is referenced to radiated power (the elements are lossless and
/// the feed is matched), so it integrates to one over the sphere.
pub fn gain_pattern(
    geom: &DsaGeometry,
    loads: &LoadVector,
    wd: &DMatrix<Complex64>,
    angles_deg: &[f64],
    d: f64,
    r: f64,
) -> Result<Vec<(f64, f64)>> {
    let (_, partition) = crate::network::assemble_impedance(geom, &PhysicalConstants::default())?;
    let state = NetworkState::new(&partition, loads, r)?;
    gain_pattern_with_state(geom, &state, wd, angles_deg, d)
}

/// `gain_pattern` against a prebuilt network state (avoids reassembling the
/// impedance matrix when sweeping load configurations).
pub fn gain_pattern_with_state(
    geom: &DsaGeometry,
    state: &NetworkState,
    wd: &DMatrix<Complex64>,
    angles_deg: &[f64],
    d: f64,
) -> Result<Vec<(f64, f64)>> {
    if d < 10.0 * geom.lambda {
        return Err(DsaError::Domain("pattern distance must be at least 10λ".into()));
    }
    let tps = ring_points_at_angles(angles_deg, d);
    let hc = transimpedance_farfield(geom, &tps)?;
    let h = end_to_end(&hc.hc, &state.wem, wd)?;
    // The information vector has one entry per precoder column (stream), so
    // E[xxᴴ] = (P_tx/streams)·I spreads the power across the streams.
    let streams = h.ncols() as f64;
    let friis = (4.0 * PI * d / geom.lambda).powi(2);
    Ok(angles_deg
        .iter()
        .enumerate()
        .map(|(k, &angle)| {
            let row_power: f64 = (0..h.ncols()).map(|j| h[(k, j)].norm_sqr()).sum();
            let gain = row_power * friis / (streams * tps.rx_gain);
            (angle, 10.0 * gain.max(1e-30).log10())
        })
        .collect())
}

/// Received power at each test point relative to transmit power, under the
/// same statistical convention as [`gain_pattern`].
pub fn received_power_fractions(h: &DMatrix<Complex64>) -> DVector<f64> {
    let na = h.ncols() as f64;
    DVector::from_iterator(
        h.nrows(),
        (0..h.nrows()).map(|k| (0..h.ncols()).map(|j| h[(k, j)].norm_sqr()).sum::<f64>() / na),
    )
}
