//! Free-space electromagnetic primitives.
//!
//! Everything in this crate reduces to three building blocks defined here:
//! the free-space Green's dyadic, the mutual/self impedance of a pair of
//! Hertzian dipoles, and superposition of dipole fields at observation
//! points. All quantities are SI; complex envelopes carry the √2 bandpass
//! normalization, so `P = Re{v* i}` holds with no extra 1/2 factor.
//!
//! The full dyadic for a displacement `r` with wavelength `λ` and wave
//! number `κ = 2π/λ` is
//!
//! ```text
//! G(r) = -jη e^{-jκ|r|} / (2λ|r|) · [ (I - r̂r̂ᵀ)
//!        - jλ/(2π|r|) · (I - 3r̂r̂ᵀ)
//!        - (λ/(2π|r|))² · (I - 3r̂r̂ᵀ) ]
//! ```
//!
//! grouping the 1/|r| (radiative), 1/|r|² and 1/|r|³ (reactive) terms. The
//! sign of the 1/|r|² term goes with the e^{-jκ|r|} phase convention; it is
//! pinned down by two physical checks exercised in the tests: the mutual
//! resistance of a closing dipole pair must approach the radiation
//! resistance (not diverge), and the real part of any assembled impedance
//! matrix must stay positive semi-definite so radiated power is
//! non-negative.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{DsaError, Result};

/// Free-space constants used by the impedance model.
///
/// `eps0` is derived from `eta` and `c` rather than taken independently so
/// that the identity `eps0 = 1/(eta·c)` holds exactly; the self-impedance
/// formula depends on it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Free-space wave impedance (Ohm).
    pub eta: f64,
    /// Speed of light (m/s).
    pub c: f64,
    /// Vacuum permittivity (F/m).
    pub eps0: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        let eta = 377.0;
        let c = 299_792_458.0;
        PhysicalConstants {
            eta,
            c,
            eps0: 1.0 / (eta * c),
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.c > 0.0 && self.eps0 > 0.0) {
            return Err(DsaError::Domain(
                "physical constants must be strictly positive".into(),
            ));
        }
        let derived = 1.0 / (self.eta * self.c);
        if ((self.eps0 - derived) / derived).abs() > 1e-6 {
            return Err(DsaError::Domain(format!(
                "eps0 = {:.6e} inconsistent with 1/(eta*c) = {:.6e}",
                self.eps0, derived
            )));
        }
        Ok(())
    }

    /// Wavelength for a carrier frequency (m).
    pub fn wavelength(&self, f0: f64) -> f64 {
        self.c / f0
    }
}

/// One Hertzian dipole: an infinitesimal current element.
#[derive(Debug, Clone, PartialEq)]
pub struct Dipole {
    /// Center position (m).
    pub position: Vector3<f64>,
    /// Unit orientation vector of the current element.
    pub orientation: Vector3<f64>,
    /// Wire length (m), short compared to the wavelength.
    pub length: f64,
    /// Wire radius (m).
    pub radius: f64,
}

impl Dipole {
    /// Builds a dipole, normalizing `orientation` (which must be nonzero).
    pub fn new(
        position: Vector3<f64>,
        orientation: Vector3<f64>,
        length: f64,
        radius: f64,
    ) -> Result<Self> {
        if !(length > 0.0) || !(radius > 0.0) {
            return Err(DsaError::Domain(format!(
                "dipole dimensions must be positive (length {length}, radius {radius})"
            )));
        }
        let norm = orientation.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(DsaError::Domain("dipole orientation must be nonzero".into()));
        }
        Ok(Dipole {
            position,
            orientation: orientation / norm,
            length,
            radius,
        })
    }

    /// Builds a dipole from spherical orientation angles: `polar` measured
    /// from the z axis and `azimuth` in the x-y plane, so the orientation is
    /// `[sin(polar)cos(azimuth), sin(polar)sin(azimuth), cos(polar)]`.
    pub fn from_angles(
        position: Vector3<f64>,
        polar: f64,
        azimuth: f64,
        length: f64,
        radius: f64,
    ) -> Result<Self> {
        let orientation = Vector3::new(
            polar.sin() * azimuth.cos(),
            polar.sin() * azimuth.sin(),
            polar.cos(),
        );
        Dipole::new(position, orientation, length, radius)
    }

    /// Vertically polarized dipole (orientation ŷ), the default used by all
    /// of the array builders.
    pub fn vertical(position: Vector3<f64>, length: f64, radius: f64) -> Result<Self> {
        Dipole::new(position, Vector3::new(0.0, 1.0, 0.0), length, radius)
    }

    /// Checks the short-dipole assumptions against a wavelength.
    pub fn validate_for_wavelength(&self, lambda: f64) -> Result<()> {
        if self.length >= lambda / 10.0 || self.radius >= lambda / 10.0 {
            return Err(DsaError::Domain(format!(
                "dipole dimensions (l={:.3e}, r={:.3e}) not small versus lambda {:.3e}",
                self.length, self.radius, lambda
            )));
        }
        Ok(())
    }
}

fn jc(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Full three-term free-space Green's dyadic for displacement `r`.
///
/// Includes the radiative 1/|r| term and the reactive 1/|r|², 1/|r|³ terms.
/// Errors on zero displacement; the coincident case is the self-impedance.
pub fn green_dyadic(r: &Vector3<f64>, lambda: f64) -> Result<Matrix3<Complex64>> {
    let dist = r.norm();
    if !(dist > 0.0) {
        return Err(DsaError::Domain(
            "green_dyadic requires a nonzero displacement".into(),
        ));
    }
    if !(lambda > 0.0) {
        return Err(DsaError::Domain("wavelength must be positive".into()));
    }
    let kappa = 2.0 * PI / lambda;
    let eta = PhysicalConstants::default().eta;
    let rhat = r / dist;

    // Dyads: (I - r̂r̂ᵀ) for the radiative term, (I - 3r̂r̂ᵀ) for the reactive ones.
    let proj = Matrix3::identity() - rhat * rhat.transpose();
    let near = Matrix3::identity() - 3.0 * (rhat * rhat.transpose());

    let inv_kr = lambda / (2.0 * PI * dist); // 1/(κ|r|)
    let phase = jc(0.0, -kappa * dist).exp();
    let prefactor = jc(0.0, -1.0) * eta * phase / (2.0 * lambda * dist);

    let c_rad = Complex64::new(1.0, 0.0);
    let c_mid = jc(0.0, -inv_kr);
    let c_near = Complex64::new(-inv_kr * inv_kr, 0.0);

    let mut g = Matrix3::<Complex64>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            g[(i, j)] = prefactor * (c_rad * proj[(i, j)] + (c_mid + c_near) * near[(i, j)]);
        }
    }
    Ok(g)
}

/// Far-field (radiative-only) Green's dyadic:
/// `-jηκ/(4π|r|) · e^{-jκ|r|} · (I - r̂r̂ᵀ)`.
///
/// Logs a warning below 10λ where the neglected reactive terms are no longer
/// negligible; errors only on zero displacement.
pub fn green_farfield(r: &Vector3<f64>, lambda: f64) -> Result<Matrix3<Complex64>> {
    let dist = r.norm();
    if !(dist > 0.0) {
        return Err(DsaError::Domain(
            "green_farfield requires a nonzero displacement".into(),
        ));
    }
    if !(lambda > 0.0) {
        return Err(DsaError::Domain("wavelength must be positive".into()));
    }
    if dist < 10.0 * lambda {
        log::warn!(
            "far-field dyadic evaluated at |r| = {:.3}λ (< 10λ); reactive terms neglected",
            dist / lambda
        );
    }
    let kappa = 2.0 * PI / lambda;
    let eta = PhysicalConstants::default().eta;
    let rhat = r / dist;
    let proj = Matrix3::identity() - rhat * rhat.transpose();
    let phase = jc(0.0, -kappa * dist).exp();
    let prefactor = jc(0.0, -1.0) * eta * kappa / (4.0 * PI * dist) * phase;

    let mut g = Matrix3::<Complex64>::zeros();
    for i in 0..3 {
        for j in 0..3 {
            g[(i, j)] = prefactor * proj[(i, j)];
        }
    }
    Ok(g)
}

/// Mutual impedance between two distinct dipoles, induced-EMF form:
/// `Z_ab = -l_a l_b Ω_aᵀ G(p_a - p_b) Ω_b`, full dyadic.
///
/// The minus sign relative to the raw field contraction is the standard
/// EMF-method port convention; it is what makes the mutual resistance of a
/// closing side-by-side pair approach `+R_rad` (two co-located in-phase
/// dipoles radiate four times the power of one, so `R_12 → R_11`) and keeps
/// `Re{Z}` positive semi-definite for any passive layout.
pub fn mutual_impedance(a: &Dipole, b: &Dipole, lambda: f64) -> Result<Complex64> {
    let r = a.position - b.position;
    if r.norm() == 0.0 {
        return Err(DsaError::Domain(
            "mutual impedance undefined for coincident dipoles".into(),
        ));
    }
    let g = green_dyadic(&r, lambda)?;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..3 {
        for j in 0..3 {
            acc += a.orientation[i] * g[(i, j)] * b.orientation[j];
        }
    }
    Ok(-a.length * b.length * acc)
}

/// Self impedance of a Hertzian dipole at carrier `f0`:
/// radiation resistance `(2/3)πη(l/λ)²` plus the capacitive reactance
/// `ln(l/r)/(jπ²f₀ε₀l)`.
pub fn self_impedance(d: &Dipole, f0: f64, constants: &PhysicalConstants) -> Result<Complex64> {
    if !(f0 > 0.0) {
        return Err(DsaError::Domain("carrier frequency must be positive".into()));
    }
    if !(d.length > 0.0) || !(d.radius > 0.0) {
        return Err(DsaError::Domain("dipole dimensions must be positive".into()));
    }
    if d.length <= d.radius * std::f64::consts::E {
        log::warn!(
            "self impedance with l/r = {:.3} <= e; thin-wire log factor below 1",
            d.length / d.radius
        );
    }
    let lambda = constants.wavelength(f0);
    let rad = (2.0 / 3.0) * PI * constants.eta * (d.length / lambda).powi(2);
    let react = (d.length / d.radius).ln() / (PI * PI * f0 * constants.eps0 * d.length);
    // 1/j = -j: the reactance is capacitive.
    Ok(Complex64::new(rad, -react))
}

/// Superposed electric field of a set of driven dipoles at observation
/// points, using the full dyadic: `E(p) = Σ_n l_n i_n G(p - p_n) Ω_n`.
pub fn efield_at(
    points: &[Vector3<f64>],
    dipoles: &[Dipole],
    currents: &[Complex64],
    lambda: f64,
) -> Result<Vec<Vector3<Complex64>>> {
    if dipoles.len() != currents.len() {
        return Err(DsaError::Dimension(format!(
            "{} dipoles but {} currents",
            dipoles.len(),
            currents.len()
        )));
    }
    let mut fields = Vec::with_capacity(points.len());
    for p in points {
        let mut e = Vector3::<Complex64>::zeros();
        for (d, &i_n) in dipoles.iter().zip(currents) {
            let r = p - d.position;
            if r.norm() == 0.0 {
                return Err(DsaError::Domain(
                    "field evaluation point coincides with a dipole".into(),
                ));
            }
            let g = green_dyadic(&r, lambda)?;
            let scale = i_n * d.length;
            for row in 0..3 {
                let mut acc = Complex64::new(0.0, 0.0);
                for col in 0..3 {
                    acc += g[(row, col)] * d.orientation[col];
                }
                e[row] += scale * acc;
            }
        }
        fields.push(e);
    }
    Ok(fields)
}
