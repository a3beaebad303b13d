mod common;

use std::f64::consts::PI;

use hallq::hamiltonian::Flux;
use hallq::linalg::{max_abs, CMat};
use hallq::loops::{
    based_loop_legs, loop_legs, loop_state, overlap_table_bound, stokes_basepoint, stokes_product, FluxSystem,
    Representation, StokesMode,
};
use hallq::models::{make_model, FreeFermionOracle, ModelRecipe, RecipeName};
use hallq::quasiadiabatic::{Filter, FilterKind, IntegratorOptions, Leg};
use hallq::spectral::slater_overlap;
use num_complex::Complex64;

fn qwz_system() -> FluxSystem {
    let spec = common::model(RecipeName::QwzFermion, 3);
    FluxSystem::new(spec, Filter::new(FilterKind::Spline, 0.9).unwrap(), Representation::Slater).unwrap()
}

/// Berry phase of the occupied orbitals around the square boundary, `n` points per side.
fn oracle_square_phase(oracle: &FreeFermionOracle, r: f64, n: usize) -> f64 {
    let mut pts = Vec::new();
    for k in 0..n {
        pts.push((r * k as f64 / n as f64, 0.0));
    }
    for k in 0..n {
        pts.push((r, r * k as f64 / n as f64));
    }
    for k in 0..n {
        pts.push((r - r * k as f64 / n as f64, r));
    }
    for k in 0..n {
        pts.push((0.0, r - r * k as f64 / n as f64));
    }
    let states: Vec<CMat> = pts.iter().map(|&(a, b)| oracle.occupied(&Flux::xy(a, b)).unwrap().0).collect();
    let mut prod = Complex64::new(1.0, 0.0);
    for k in 0..states.len() {
        prod *= slater_overlap(&states[k], &states[(k + 1) % states.len()]);
    }
    -prod.arg()
}

#[test]
fn small_loop_phase_matches_boundary_berry_phase() {
    let sys = qwz_system();
    let oracle = FreeFermionOracle::new(sys.spec()).unwrap();
    let opts = IntegratorOptions::states().with_tol(1e-11);
    for r in [0.3, 0.1] {
        let p = loop_state(&sys, (0.0, 0.0), r, &opts).unwrap().overlap;
        assert!((p.norm() - 1.0).abs() < 1e-7);
        let want = oracle_square_phase(&oracle, r, 400);
        assert!((p.arg() - want).abs() < 1e-7, "r = {r}: {} vs {want}", p.arg());
    }
    let tiny = loop_state(&sys, (0.0, 0.0), 1e-3, &opts).unwrap().overlap;
    assert!((1.0 - tiny).norm() <= 1e-4);
}

#[test]
fn trivial_model_loops_are_trivial() {
    let spec = common::model(RecipeName::TrivialProduct, 3);
    let sys = FluxSystem::new(spec, Filter::new(FilterKind::Spline, 0.1).unwrap(), Representation::Fock).unwrap();
    for r in [0.2, 1.0, 2.0 * PI] {
        let p = loop_state(&sys, (0.4, 1.0), r, &IntegratorOptions::states()).unwrap().overlap;
        assert!((p - 1.0).norm() <= 1e-9);
    }
    let t = stokes_product(&sys, 2, StokesMode::State, &IntegratorOptions::states()).unwrap();
    assert!(t.delta <= 1e-9);
    let b = overlap_table_bound(&t);
    assert!(b.left <= 1e-9 && b.right <= 1e-9);
}

#[test]
fn loop_legs_start_and_end_at_basepoint() {
    for legs in [loop_legs((0.3, 0.2), 0.5), based_loop_legs((1.0, 2.0), 0.25)] {
        let first = legs.first().unwrap().start;
        let last = legs.last().unwrap().end();
        assert!((first.theta_x - last.theta_x).abs() < 1e-15 && (first.theta_y - last.theta_y).abs() < 1e-15);
    }
    // N = 3: k = 1 is the rightmost square of the bottom row, k = N² the top-left one
    assert_eq!(stokes_basepoint(1, 3), (2, 0));
    assert_eq!(stokes_basepoint(3, 3), (0, 0));
    assert_eq!(stokes_basepoint(9, 3), (0, 2));
}

#[test]
fn single_square_stokes_is_tautological() {
    let spec = make_model(&ModelRecipe::new(RecipeName::XyFluxBoson).with_charge(2), 3).unwrap();
    let sys = FluxSystem::new(spec, Filter::new(FilterKind::Spline, 0.3).unwrap(), Representation::Fock).unwrap();
    let opts = IntegratorOptions::unitaries();
    let t = stokes_product(&sys, 1, StokesMode::Unitary, &opts).unwrap();
    let entry = t.product_residual_entry.unwrap();
    assert!(entry <= 10.0 * opts.tol, "{entry:e}");
    assert!(t.p.iter().all(|p| p.norm() <= 1.0 + 1e-9));
}

#[test]
fn stokes_state_mode_factors_are_contractions() {
    let sys = qwz_system();
    let t = stokes_product(&sys, 2, StokesMode::State, &IntegratorOptions::states()).unwrap();
    assert_eq!(t.p.len(), 4);
    assert!(t.p.iter().all(|p| p.norm() <= 1.0 + 1e-9));
    let b = overlap_table_bound(&t);
    assert!(b.max_modulus <= 1.0 + 1e-9);
}

#[test]
fn fock_and_slater_dynamics_agree() {
    // bilinear generators: the many-body S_Δ acts as the bilinear of the single-particle one
    let spec = make_model(&ModelRecipe::new(RecipeName::QwzFermion).with_charge(2), 3).unwrap();
    let filter = Filter::new(FilterKind::Spline, 0.4).unwrap();
    let fock = FluxSystem::new(spec.clone(), filter, Representation::Fock).unwrap();
    let slater = FluxSystem::new(spec.clone(), filter, Representation::Slater).unwrap();
    let start = Flux::xy(0.3, 0.2);
    let orbitals = slater.ground(&start).unwrap().state;
    let sec = fock.sector().unwrap();
    let amps = sec.slater_amplitudes(&orbitals).unwrap();
    let psi = CMat::from_column_slice(amps.len(), 1, amps.as_slice());
    let legs = [Leg::new(start, Flux::unit_x(), 0.5), Leg::new(Flux::xy(0.8, 0.2), Flux::unit_y(), -0.4)];
    let opts = IntegratorOptions::states().with_tol(1e-11);
    let (a, _) = fock.evolve(&legs, &psi, &opts).unwrap();
    let (b, _) = slater.evolve(&legs, &orbitals, &opts).unwrap();
    let b_amps = sec.slater_amplitudes(&b).unwrap();
    let b_col = CMat::from_column_slice(b_amps.len(), 1, b_amps.as_slice());
    assert!(max_abs(&(a - b_col)) < 1e-9);
}
