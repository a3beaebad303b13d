mod common;

use std::f64::consts::PI;

use hallq::conductance::gap_lower_bound;
use hallq::fock::{LocalSpace, ModeLayout, Sector, SectorAssembler, Statistics};
use hallq::hamiltonian::Flux;
use hallq::linalg::{CMat, CVec};
use hallq::loops::parallel_transport;
use hallq::models::{make_model, ModelRecipe, RecipeName};
use hallq::quasiadiabatic::{IntegratorOptions, Leg};
use hallq::spectral::{slater_ground, slater_overlap, Spectrum};
use num_complex::Complex64;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

#[test]
fn diagonal_ground_data() {
    let h = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(0.0), c(2.0)]));
    let g = Spectrum::of(&h).ground_state();
    assert!(g.energy.abs() < 1e-15 && (g.gap - 1.0).abs() < 1e-15 && !g.degenerate);
    let d = CMat::from_diagonal(&CVec::from_vec(vec![c(0.5), c(0.5), c(2.0)]));
    let g = Spectrum::of(&d).ground_state();
    assert!(g.degenerate);
    assert!(g.require_unique().is_err());
}

#[test]
fn two_site_hop_has_bonding_ground_state() {
    let t = 0.8;
    let layout = ModeLayout { n_sites: 2, orbitals: 1, statistics: Statistics::HardcoreBoson };
    let sector = Sector::new(layout, 1).unwrap();
    let ls = LocalSpace::new(vec![0, 1], Statistics::HardcoreBoson);
    let mut asm = SectorAssembler::new(&sector);
    asm.add(ls.modes(), &ls.hopping(0, 1, c(-t))).unwrap();
    let g = Spectrum::of(&asm.finish().to_dense()).ground_state();
    assert!((g.energy + t).abs() < 1e-14);
    assert!((g.gap - 2.0 * t).abs() < 1e-14);
}

#[test]
fn slater_ground_matches_many_body_sector() {
    let spec = make_model(&ModelRecipe::new(RecipeName::QwzFermion).with_charge(2), 3).unwrap();
    let f = Flux::xy(0.8, -0.3);
    let sec = spec.sector().unwrap();
    let mb = Spectrum::of(&spec.hamiltonian(&sec, &f).unwrap().to_dense()).ground_state();
    let sl = slater_ground(&spec.quadratic_hamiltonian(&f).unwrap(), 2).unwrap();
    assert!((mb.energy - sl.energy).abs() < 1e-10);
    // the Slater amplitudes reproduce the many-body vector up to a phase
    let amp = sec.slater_amplitudes(&sl.orbitals).unwrap();
    assert!((amp.dotc(&mb.psi).norm() - 1.0).abs() < 1e-10);
}

#[test]
fn slater_overlap_is_determinant_of_orbital_overlaps() {
    let a = CMat::from_fn(4, 2, |i, j| if i == j { c(1.0) } else { c(0.0) });
    let th: f64 = 0.3;
    let mut b = a.clone();
    b[(0, 0)] = c(th.cos());
    b[(2, 0)] = c(th.sin());
    assert!((slater_overlap(&a, &b) - c(th.cos())).norm() < 1e-15);
}

fn transport_opts() -> IntegratorOptions {
    IntegratorOptions::states().with_tol(1e-11)
}

#[test]
fn transport_along_constant_hamiltonian_is_trivial() {
    let spec = common::model(RecipeName::TrivialProduct, 3);
    let legs = [Leg::new(Flux::default(), Flux::unit_y(), 1.5)];
    let t = parallel_transport(&spec, &legs, &transport_opts()).unwrap();
    assert!(t.phase.abs() < 1e-12);
    assert!((t.overlap_with_ground.norm() - 1.0).abs() < 1e-12);
}

#[test]
fn twist_anti_twist_loop_returns_to_ground_state() {
    let spec = common::model(RecipeName::XyFluxBoson, 3);
    let legs = [Leg::new(Flux::default(), Flux::new(1.0, -1.0, 0.0, 0.0), 2.0 * PI)];
    let t = parallel_transport(&spec, &legs, &transport_opts()).unwrap();
    // e^{i2πQ_X} = 1 on integer charges, so the end state is Ψ0 up to a phase
    assert!((t.overlap_with_ground.norm() - 1.0).abs() < 1e-8);
    assert!(t.connection < 1e-8);
}

#[test]
fn transported_phase_matches_wilson_loop() {
    // one boson on a ring with a staggered potential: Berry phase of a full flux turn
    let spec = make_model(&ModelRecipe::new(RecipeName::BosonChain).with_charge(1), 5).unwrap();
    let sec = spec.sector().unwrap();
    let legs = [Leg::new(Flux::default(), Flux::unit_x(), 2.0 * PI)];
    let t = parallel_transport(&spec, &legs, &transport_opts()).unwrap();
    let n = 2000;
    let states: Vec<CVec> = (0..n)
        .map(|k| Spectrum::of(&spec.hamiltonian(&sec, &Flux::xy(2.0 * PI * k as f64 / n as f64, 0.0)).unwrap().to_dense()).ground_state().psi)
        .collect();
    let mut prod = c(1.0);
    for k in 0..n {
        prod *= states[k].dotc(&states[(k + 1) % n]);
    }
    let wilson = -prod.arg();
    let diff = (t.phase - wilson + PI).rem_euclid(2.0 * PI) - PI;
    assert!(diff.abs() < 1e-6, "transport {} vs wilson {}", t.phase, wilson);
}

#[test]
fn gap_estimate_examples() {
    for sys in common::gapped_systems(0.1) {
        let origin = Flux::default();
        let at_zero = gap_lower_bound(&sys, &origin, &[origin]).unwrap();
        assert!((at_zero.bound - at_zero.gap_start).abs() < 1e-15);
        let samples: Vec<Flux> = (1..=4).map(|k| Flux::xy(0.05 * k as f64, 0.02 * k as f64)).collect();
        let b = gap_lower_bound(&sys, &origin, &samples).unwrap();
        assert!(b.holds, "{}: bound {} measured {}", sys.spec().id(), b.bound, b.measured_min);
        let far = gap_lower_bound(&sys, &origin, &[Flux::xy(PI, PI)]).unwrap();
        assert!(far.vacuous && far.holds);
    }
}
