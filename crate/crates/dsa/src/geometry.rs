//! Array layout builders: scattering structures, baseline arrays, and
//! far-field test rings.
//!
//! All builders emit vertically polarized (ŷ-oriented) elements; steering
//! and test directions live in the x-z plane so each dipole is seen in the
//! plane where its element pattern is isotropic.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::em::{Dipole, PhysicalConstants};
use crate::error::{DsaError, Result};

/// Wire dimensions shared by all elements of a build.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementDims {
    pub length: f64,
    pub radius: f64,
}

impl ElementDims {
    /// The standard element for a given wavelength: `l = λ/50`, `r = λ/100`.
    pub fn standard(lambda: f64) -> Self {
        ElementDims {
            length: lambda / 50.0,
            radius: lambda / 100.0,
        }
    }
}

/// A scattering array: actively fed elements followed by reactively loaded
/// scatterers. The active-first ordering fixes the block structure of the
/// impedance matrix everywhere downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct DsaGeometry {
    pub active: Vec<Dipole>,
    pub scatterers: Vec<Dipole>,
    /// Carrier wavelength (m).
    pub lambda: f64,
    /// Carrier frequency (Hz).
    pub f0: f64,
}

impl DsaGeometry {
    pub fn new(active: Vec<Dipole>, scatterers: Vec<Dipole>, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(DsaError::Geometry("wavelength must be positive".into()));
        }
        let f0 = PhysicalConstants::default().c / lambda;
        let geom = DsaGeometry {
            active,
            scatterers,
            lambda,
            f0,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    pub fn n_scatterers(&self) -> usize {
        self.scatterers.len()
    }

    pub fn n_total(&self) -> usize {
        self.active.len() + self.scatterers.len()
    }

    /// Elements in impedance-matrix order: actives first, then scatterers.
    pub fn elements(&self) -> impl Iterator<Item = &Dipole> {
        self.active.iter().chain(self.scatterers.iter())
    }

    /// Checks pairwise-distinct positions, unit orientations, and the
    /// short-dipole assumptions.
    pub fn validate(&self) -> Result<()> {
        if self.active.is_empty() {
            return Err(DsaError::Geometry("at least one active element required".into()));
        }
        let elems: Vec<&Dipole> = self.elements().collect();
        for d in &elems {
            d.validate_for_wavelength(self.lambda)?;
            if (d.orientation.norm() - 1.0).abs() > 1e-12 {
                return Err(DsaError::Geometry("non-unit orientation".into()));
            }
        }
        for i in 0..elems.len() {
            for j in (i + 1)..elems.len() {
                if (elems[i].position - elems[j].position).norm() == 0.0 {
                    return Err(DsaError::Geometry(format!(
                        "elements {i} and {j} are coincident"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Number of elements placed on one circle so that the arc spacing is
/// approximately λ/2.
pub fn circle_count(radius: f64, lambda: f64) -> usize {
    ((2.0 * std::f64::consts::PI * radius) / (lambda / 2.0)).round().max(1.0) as usize
}

fn centered_offsets(count: usize, step: f64) -> Vec<f64> {
    (0..count)
        .map(|i| (i as f64 - (count as f64 - 1.0) / 2.0) * step)
        .collect()
}

fn active_stack(na: usize, lambda: f64, dims: ElementDims) -> Result<Vec<Dipole>> {
    centered_offsets(na, lambda / 2.0)
        .into_iter()
        .map(|y| Dipole::vertical(Vector3::new(0.0, y, 0.0), dims.length, dims.radius))
        .collect()
}

/// Scatterers on `rings` concentric circles of radius `ℓ·delta_l` (ℓ = 1..rings)
/// in the x-z plane, arc spacing ≈ λ/2, replicated at `vertical_rings` heights
/// spaced λ/2 along ŷ. `vertical_rings = 1` degenerates to a flat disk.
/// Active elements stack on the axis, λ/2 apart, centered at the origin.
pub fn build_cylinder_dsa(
    delta_l: f64,
    rings: usize,
    vertical_rings: usize,
    lambda: f64,
    na: usize,
    dims: ElementDims,
) -> Result<DsaGeometry> {
    if !(delta_l > 0.0) || rings == 0 || vertical_rings == 0 || na == 0 {
        return Err(DsaError::Geometry(
            "cylinder build requires delta_l > 0, rings >= 1, vertical_rings >= 1, na >= 1".into(),
        ));
    }
    let mut scatterers = Vec::new();
    let heights = centered_offsets(vertical_rings, lambda / 2.0);
    for ring in 1..=rings {
        let radius = ring as f64 * delta_l;
        let count = circle_count(radius, lambda);
        for &y in &heights {
            for i in 0..count {
                let angle = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                let pos = Vector3::new(radius * angle.sin(), y, radius * angle.cos());
                scatterers.push(Dipole::vertical(pos, dims.length, dims.radius)?);
            }
        }
    }
    DsaGeometry::new(active_stack(na, lambda, dims)?, scatterers, lambda)
}

/// Scatterers drawn uniformly over a disk of the given diameter in the x-z
/// plane by rejection sampling on the bounding square; deterministic for a
/// given seed. No minimum-spacing constraint is applied.
pub fn build_random_disk_dsa(
    ns: usize,
    diameter: f64,
    lambda: f64,
    na: usize,
    dims: ElementDims,
    seed: u64,
) -> Result<DsaGeometry> {
    if ns == 0 || !(diameter > 0.0) || na == 0 {
        return Err(DsaError::Geometry(
            "random disk build requires ns >= 1, diameter > 0, na >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radius = diameter / 2.0;
    let mut scatterers = Vec::with_capacity(ns);
    while scatterers.len() < ns {
        let x = rng.gen_range(-radius..=radius);
        let z = rng.gen_range(-radius..=radius);
        if x * x + z * z <= radius * radius {
            scatterers.push(Dipole::vertical(
                Vector3::new(x, 0.0, z),
                dims.length,
                dims.radius,
            )?);
        }
    }
    DsaGeometry::new(active_stack(na, lambda, dims)?, scatterers, lambda)
}

/// Fully active uniform linear array along ẑ, centered at the origin.
pub fn build_ula(na: usize, spacing: f64, lambda: f64, dims: ElementDims) -> Result<DsaGeometry> {
    if na < 2 {
        return Err(DsaError::Geometry("ULA requires na >= 2".into()));
    }
    let active = centered_offsets(na, spacing)
        .into_iter()
        .map(|z| Dipole::vertical(Vector3::new(0.0, 0.0, z), dims.length, dims.radius))
        .collect::<Result<Vec<_>>>()?;
    DsaGeometry::new(active, Vec::new(), lambda)
}

/// Fully active uniform circular array on a circle of the given diameter in
/// the x-z plane.
pub fn build_uca(na: usize, diameter: f64, lambda: f64, dims: ElementDims) -> Result<DsaGeometry> {
    if na < 2 {
        return Err(DsaError::Geometry("UCA requires na >= 2".into()));
    }
    let radius = diameter / 2.0;
    let active = (0..na)
        .map(|i| {
            let angle = 2.0 * std::f64::consts::PI * i as f64 / na as f64;
            Dipole::vertical(
                Vector3::new(radius * angle.sin(), 0.0, radius * angle.cos()),
                dims.length,
                dims.radius,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    DsaGeometry::new(active, Vec::new(), lambda)
}

/// Far-field observation points with receive orientation and gain.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPointSet {
    pub points: Vec<Vector3<f64>>,
    pub rx_orientations: Vec<Vector3<f64>>,
    /// Linear receive gain (1.0 = 0 dB).
    pub rx_gain: f64,
}

impl TestPointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Warns if any point sits closer than 10λ to a position of `geom`.
    pub fn check_far_field(&self, geom: &DsaGeometry) -> bool {
        let mut ok = true;
        for t in &self.points {
            for d in geom.elements() {
                if (t - d.position).norm() < 10.0 * geom.lambda {
                    log::warn!("test point at {:?} within 10λ of an element", t);
                    ok = false;
                }
            }
        }
        ok
    }
}

/// `k` ŷ-polarized test points uniformly spread on the x-z circle of radius
/// `d`: point `i` sits at angle `φ_i = 2πi/k`, with point 0 at `(0, 0, d)`.
pub fn build_test_ring(k: usize, d: f64, lambda: f64) -> Result<TestPointSet> {
    if k == 0 {
        return Err(DsaError::Geometry("test ring requires k >= 1".into()));
    }
    if d < 10.0 * lambda {
        log::warn!("test ring radius {d} below 10λ = {}", 10.0 * lambda);
    }
    let points = (0..k)
        .map(|i| {
            let phi = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            Vector3::new(d * phi.sin(), 0.0, d * phi.cos())
        })
        .collect();
    Ok(TestPointSet {
        points,
        rx_orientations: vec![Vector3::new(0.0, 1.0, 0.0); k],
        rx_gain: 1.0,
    })
}

/// Positions on the x-z ring of radius `d` at explicit angles (degrees),
/// ŷ-polarized. Angle 0 maps to +ẑ.
pub fn ring_points_at_angles(angles_deg: &[f64], d: f64) -> TestPointSet {
    let points = angles_deg
        .iter()
        .map(|a| {
            let phi = a.to_radians();
            Vector3::new(d * phi.sin(), 0.0, d * phi.cos())
        })
        .collect::<Vec<_>>();
    TestPointSet {
        rx_orientations: vec![Vector3::new(0.0, 1.0, 0.0); points.len()],
        points,
        rx_gain: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const LAMBDA: f64 = 0.010706873500000001; // c / 28 GHz

    #[test]
    fn cylinder_counts_are_locked() {
        // Regression lock on the circle-count rule round(2πr/(λ/2)) for the
        // swept radial-step configurations; the count must stay a pure
        // function of (delta_l, rings, vertical_rings, λ).
        let dims = ElementDims::standard(LAMBDA);
        let cases = [
            (LAMBDA / 8.0, 1, 24usize),
            (LAMBDA / 6.0, 1, 30),
            (LAMBDA / 4.0, 1, 47),
            (LAMBDA / 2.0, 1, 94),
            (LAMBDA, 1, 189),
            (LAMBDA / 4.0, 3, 141),
        ];
        for (delta, lr, expected) in cases {
            let g = build_cylinder_dsa(delta, 5, lr, LAMBDA, 1, dims).unwrap();
            assert_eq!(g.n_scatterers(), expected, "delta_l = {delta}, L_R = {lr}");
        }
    }

    #[test]
    fn cylinder_vertical_replication_scales_counts() {
        let dims = ElementDims::standard(LAMBDA);
        let disk = build_cylinder_dsa(LAMBDA / 4.0, 5, 1, LAMBDA, 1, dims).unwrap();
        let stack = build_cylinder_dsa(LAMBDA / 4.0, 5, 3, LAMBDA, 1, dims).unwrap();
        assert_eq!(stack.n_scatterers(), 3 * disk.n_scatterers());
    }

    #[test]
    fn cylinder_geometry_is_valid_and_planar_for_single_ring() {
        let dims = ElementDims::standard(LAMBDA);
        let g = build_cylinder_dsa(LAMBDA / 4.0, 5, 1, LAMBDA, 1, dims).unwrap();
        g.validate().unwrap();
        for s in &g.scatterers {
            assert_eq!(s.position.y, 0.0);
            assert_eq!(s.orientation, Vector3::new(0.0, 1.0, 0.0));
        }
        let outer = g
            .scatterers
            .iter()
            .map(|s| s.position.norm())
            .fold(0.0, f64::max);
        assert_relative_eq!(outer, 5.0 * LAMBDA / 4.0, max_relative = 1e-12);
    }

    #[test]
    fn random_disk_is_deterministic_and_bounded() {
        let dims = ElementDims::standard(LAMBDA);
        let diameter = 0.032;
        let a = build_random_disk_dsa(121, diameter, LAMBDA, 1, dims, 7).unwrap();
        let b = build_random_disk_dsa(121, diameter, LAMBDA, 1, dims, 7).unwrap();
        assert_eq!(a, b, "same seed must give bitwise-identical geometry");
        assert_eq!(a.n_scatterers(), 121);
        for s in &a.scatterers {
            assert!(s.position.norm() <= diameter / 2.0);
            assert_eq!(s.position.y, 0.0);
        }
        let c = build_random_disk_dsa(121, diameter, LAMBDA, 1, dims, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ula_is_centered_and_symmetric() {
        let dims = ElementDims::standard(LAMBDA);
        // 6 elements across a 3.2 cm aperture.
        let spacing = 0.032 / 5.0;
        let g = build_ula(6, spacing, LAMBDA, dims).unwrap();
        assert_eq!(g.n_active(), 6);
        assert_eq!(g.n_scatterers(), 0);
        let mean_z: f64 = g.active.iter().map(|d| d.position.z).sum::<f64>() / 6.0;
        assert!(mean_z.abs() < 1e-15);
        for d in &g.active {
            let mirrored = g
                .active
                .iter()
                .any(|e| (e.position.z + d.position.z).abs() < 1e-15);
            assert!(mirrored, "positions symmetric about the array center");
        }
        let span = g.active.last().unwrap().position.z - g.active[0].position.z;
        assert_relative_eq!(span, 0.032, max_relative = 1e-12);
    }

    #[test]
    fn uca_lies_on_requested_circle() {
        let dims = ElementDims::standard(LAMBDA);
        let g = build_uca(36, 0.032, LAMBDA, dims).unwrap();
        assert_eq!(g.n_active(), 36);
        for d in &g.active {
            assert_relative_eq!(d.position.norm(), 0.016, max_relative = 1e-12);
            assert_eq!(d.position.y, 0.0);
        }
    }

    #[test]
    fn test_ring_layout() {
        let tps = build_test_ring(108, 100.0, LAMBDA).unwrap();
        assert_eq!(tps.len(), 108);
        assert_relative_eq!(tps.points[0].x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(tps.points[0].z, 100.0, max_relative = 1e-12);
        for p in &tps.points {
            assert_relative_eq!(p.norm(), 100.0, max_relative = 1e-12);
            assert_eq!(p.y, 0.0);
        }
    }

    #[test]
    fn degenerate_parameters_are_rejected() {
        let dims = ElementDims::standard(LAMBDA);
        assert!(build_cylinder_dsa(0.0, 5, 1, LAMBDA, 1, dims).is_err());
        assert!(build_cylinder_dsa(LAMBDA / 4.0, 0, 1, LAMBDA, 1, dims).is_err());
        assert!(build_random_disk_dsa(0, 0.03, LAMBDA, 1, dims, 0).is_err());
        assert!(build_ula(1, 0.01, LAMBDA, dims).is_err());
        assert!(build_test_ring(0, 100.0, LAMBDA).is_err());
    }
}
