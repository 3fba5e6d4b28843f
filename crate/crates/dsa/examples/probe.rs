// Scratch physics probe (not part of the deliverable surface).
use dsa::channel::{gain_pattern_with_state, transimpedance_farfield};
use dsa::em::PhysicalConstants;
use dsa::geometry::{
    build_cylinder_dsa, build_test_ring, build_ula, build_uca, ring_points_at_angles, ElementDims,
};
use dsa::network::{assemble_impedance, powers_and_q_precoded, LoadVector, NetworkState};
use dsa::optimize::{alternate_optimize, Budgets, OptProblem, ThetaInit, Variant};
use dsa::usecases::target_beamsteer;
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::time::Instant;

fn matched_steer(
    geom: &dsa::DsaGeometry,
    state: &NetworkState,
    angle: f64,
    d: f64,
    r: f64,
) -> DMatrix<Complex64> {
    let steer = ring_points_at_angles(&[angle], d);
    let hc = transimpedance_farfield(geom, &steer).unwrap().hc;
    let g = &hc * &state.wem;
    let mut w = g.adjoint();
    w *= Complex64::new(r.sqrt() / w.norm(), 0.0);
    w
}

fn geometric_steer(geom: &dsa::DsaGeometry, angle: f64, r: f64) -> DMatrix<Complex64> {
    let phi = (angle as f64).to_radians();
    let u = nalgebra::Vector3::new(phi.sin(), 0.0, phi.cos());
    let kappa = 2.0 * std::f64::consts::PI / geom.lambda;
    let na = geom.n_active();
    let mut w = DMatrix::from_fn(na, 1, |n, _| {
        Complex64::new(0.0, -kappa * u.dot(&geom.active[n].position)).exp()
    });
    w *= Complex64::new(r.sqrt() / w.norm(), 0.0);
    w
}

fn peak(pattern: &[(f64, f64)]) -> (f64, f64) {
    pattern
        .iter()
        .cloned()
        .fold((0.0, f64::NEG_INFINITY), |acc, p| if p.1 > acc.1 { p } else { acc })
}

fn main() {
    let consts = PhysicalConstants::default();
    let lambda = consts.wavelength(28e9);
    let r = 50.0;
    let d = 100.0;
    let dims = ElementDims::standard(lambda);
    let angles: Vec<f64> = (0..360).map(|a| a as f64).collect();

    // --- Baseline: single dipole
    {
        let geom = dsa::DsaGeometry::new(
            vec![dsa::Dipole::vertical(nalgebra::Vector3::zeros(), dims.length, dims.radius).unwrap()],
            vec![],
            lambda,
        )
        .unwrap();
        let (_, part) = assemble_impedance(&geom, &consts).unwrap();
        let state = NetworkState::new(&part, &LoadVector::zeros(0), r).unwrap();
        let wd = DMatrix::from_element(1, 1, Complex64::new(r.sqrt(), 0.0));
        let pat = gain_pattern_with_state(&geom, &state, &wd, &angles, d).unwrap();
        println!("single dipole peak: {:.3} dB (expect 1.76)", peak(&pat).1);
    }

    // --- Baseline: ULA 6 over 3.2cm, steer broadside (90°)
    for spacing in [0.032 / 5.0, lambda / 2.0] {
        let geom = build_ula(6, spacing, lambda, dims).unwrap();
        let (_, part) = assemble_impedance(&geom, &consts).unwrap();
        let state = NetworkState::new(&part, &LoadVector::zeros(0), r).unwrap();
        let w = matched_steer(&geom, &state, 90.0, d, r);
        let pat = gain_pattern_with_state(&geom, &state, &w, &angles, d).unwrap();
        let (pa, pg) = peak(&pat);
        println!("ULA6 sp={spacing:.4} matched broadside: {:.3} dB at {:.0}° (expect 10.6)", pg, pa);
        let w = geometric_steer(&geom, 90.0, r);
        let pat = gain_pattern_with_state(&geom, &state, &w, &angles, d).unwrap();
        let (pa, pg) = peak(&pat);
        println!("ULA6 sp={spacing:.4} geometric broadside: {:.3} dB at {:.0}°", pg, pa);
    }

    // --- Baseline: UCA 36 on 3.2cm
    {
        let geom = build_uca(36, 0.032, lambda, dims).unwrap();
        let (_, part) = assemble_impedance(&geom, &consts).unwrap();
        let state = NetworkState::new(&part, &LoadVector::zeros(0), r).unwrap();
        for steer in [0.0, 45.0] {
            let wm = matched_steer(&geom, &state, steer, d, r);
            let pm = peak(&gain_pattern_with_state(&geom, &state, &wm, &angles, d).unwrap());
            let wg = geometric_steer(&geom, steer, r);
            let pg = peak(&gain_pattern_with_state(&geom, &state, &wg, &angles, d).unwrap());
            println!(
                "UCA36 steer {steer}°: matched {:.3} dB at {:.0}°, geometric {:.3} dB at {:.0}° (expect ~15.6)",
                pm.1, pm.0, pg.1, pg.0
            );
        }
    }

    // --- Reference disk beam steering
    let args: Vec<String> = std::env::args().collect();
    let ni: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(300);
    {
        let geom = build_cylinder_dsa(lambda / 4.0, 5, 1, lambda, 1, dims).unwrap();
        println!("reference disk: N_s = {}", geom.n_scatterers());
        let (_, part) = assemble_impedance(&geom, &consts).unwrap();
        let tps = build_test_ring(108, d, lambda).unwrap();
        let hc = transimpedance_farfield(&geom, &tps).unwrap();
        for (steer_deg, init) in [
            (0.0f64, ThetaInit::Zeros),
            (0.0, ThetaInit::Resonant),
            (30.0, ThetaInit::Resonant),
        ] {
            let k_star = (steer_deg / 360.0 * 108.0).round() as usize % 108;
            let target = target_beamsteer(&tps, k_star, 1.0).unwrap();
            let problem = OptProblem {
                partition: part.clone(),
                hc: hc.hc.clone(),
                hopt: target.hopt.clone(),
                r,
                na: 1,
                variant: Variant::Direct,
                budgets: Budgets { inner: ni, alternations: 1 },
                seed: 1,
                init,
                digital: false,
            };
            let t0 = Instant::now();
            let sol = alternate_optimize(&problem).unwrap();
            let dt = t0.elapsed();
            let state = NetworkState::new(&part, &LoadVector(sol.theta.clone()), r).unwrap();
            let pat = gain_pattern_with_state(&geom, &state, &sol.wd, &angles, d).unwrap();
            let (pa, pg) = peak(&pat);
            let (_, _, q) = powers_and_q_precoded(&sol.wd, &state.za, r, 1.0).unwrap();
            println!(
                "disk steer {steer_deg}° init={init:?} ni={ni}: peak {pg:.2} dB at {pa:.0}°, Q={q:.3}, residual {:.4} -> {:.4}, alpha^2 = {:.3e}, {} iters in {:.1?}",
                sol.residual_history.first().unwrap(),
                sol.residual_history.last().unwrap(),
                sol.alpha * sol.alpha,
                ni,
                dt
            );
            let thetas: Vec<f64> = sol.theta.iter().cloned().collect();
            let tmin = thetas.iter().cloned().fold(f64::INFINITY, f64::min);
            let tmax = thetas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let tmean = thetas.iter().sum::<f64>() / thetas.len() as f64;
            println!("  theta range: [{tmin:.1}, {tmax:.1}], mean {tmean:.1}");
        }
    }
}
