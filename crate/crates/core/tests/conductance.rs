mod common;

use std::f64::consts::PI;

use hallq::conductance::{chern_number, kubo_curvature, loop_phase_conductance, quantization_report, ChernOptions, Method};
use hallq::hamiltonian::Flux;
use hallq::linalg::CVec;
use hallq::loops::{FluxSystem, Representation};
use hallq::models::{make_model, FreeFermionOracle, ModelRecipe, RecipeName};
use hallq::quasiadiabatic::{Filter, FilterKind, IntegratorOptions};
use hallq::spectral::Spectrum;
use num_complex::Complex64;

#[test]
fn decoupled_model_has_no_curvature() {
    let spec = common::model(RecipeName::TrivialProduct, 3);
    for f in [Flux::default(), Flux::xy(1.0, 2.5)] {
        assert!(kubo_curvature(&spec, &f, Method::ManyBody, 1e-12).unwrap().g.abs() < 1e-14);
    }
    let c = chern_number(&spec, &ChernOptions::new(6, Method::ManyBody)).unwrap();
    assert_eq!(c.chern, 0);
    assert!(c.integrality_defect <= 1e-9);
    let sys = FluxSystem::new(spec, Filter::new(FilterKind::Spline, 0.1).unwrap(), Representation::Fock).unwrap();
    let lp = loop_phase_conductance(&sys, &[0.2, 0.1], &IntegratorOptions::states()).unwrap();
    assert!(lp.phases.iter().all(|p| p.phi.abs() <= 1e-9));
    let q = quantization_report(&sys, 8, &IntegratorOptions::states()).unwrap();
    assert_eq!(q.nearest_integer, 0);
    assert!(q.sigma_tilde.abs() < 1e-12);
    assert!(q.b1 <= 1e-7 && q.b2 <= 1e-7 && q.b3 <= 1e-7);
}

#[test]
fn single_particle_kubo_matches_oracle() {
    let spec = common::model(RecipeName::QwzFermion, 3);
    let oracle = FreeFermionOracle::new(&spec).unwrap();
    for f in [Flux::default(), Flux::xy(2.0, 0.7)] {
        let k = kubo_curvature(&spec, &f, Method::SingleParticle, 1e-12).unwrap();
        let o = oracle.curvature(&f).unwrap();
        assert!((k.g - o).abs() < 1e-8, "{} vs {o}", k.g);
    }
}

#[test]
fn many_body_kubo_matches_oracle_at_origin() {
    let spec = common::model(RecipeName::QwzFermion, 3);
    let k = kubo_curvature(&spec, &Flux::default(), Method::ManyBody, 1e-12).unwrap();
    let o = FreeFermionOracle::new(&spec).unwrap().curvature(&Flux::default()).unwrap();
    assert!((k.g - o).abs() < 1e-8, "{} vs {o}", k.g);
}

/// `−arg` of the overlap product around a centred square of side `h`, divided by `h²`.
fn finite_difference_curvature(spec: &hallq::hamiltonian::ModelSpec, f: &Flux, h: f64) -> f64 {
    let sec = spec.sector().unwrap();
    let gs = |a: f64, b: f64| -> CVec {
        Spectrum::of(&spec.hamiltonian(&sec, &Flux::xy(f.theta_x + a, f.theta_y + b)).unwrap().to_dense())
            .ground_state()
            .psi
    };
    let s = h / 2.0;
    let corners = [gs(-s, -s), gs(s, -s), gs(s, s), gs(-s, s)];
    let mut prod = Complex64::new(1.0, 0.0);
    for k in 0..4 {
        prod *= corners[k].dotc(&corners[(k + 1) % 4]);
    }
    -prod.arg() / (h * h)
}

#[test]
fn kubo_agrees_with_finite_differences_to_second_order() {
    let spec = common::model(RecipeName::XyFluxBoson, 3);
    let f = Flux::xy(0.6, 1.3);
    let k = kubo_curvature(&spec, &f, Method::ManyBody, 1e-12).unwrap().g;
    let e1 = (finite_difference_curvature(&spec, &f, 0.04) - k).abs();
    let e2 = (finite_difference_curvature(&spec, &f, 0.02) - k).abs();
    assert!(e1 < 1e-3);
    // halving h cuts the error by about four
    assert!(e2 < 0.3 * e1, "{e1:e} {e2:e}");
}

#[test]
fn oracle_chern_follows_mass() {
    for (m, want) in [(-3.0, 0), (3.0, 0), (-1.0, 1), (1.0, 1)] {
        let spec = make_model(&ModelRecipe::new(RecipeName::QwzFermion).with("m", m), 3).unwrap();
        let c = FreeFermionOracle::new(&spec).unwrap().chern(8).unwrap();
        assert_eq!(c.chern.abs(), want, "m = {m}");
        assert!((c.raw - c.chern as f64).abs() < 1e-9);
    }
}

#[test]
fn single_particle_chern_matches_oracle() {
    let spec = common::model(RecipeName::QwzFermion, 3);
    let c = chern_number(&spec, &ChernOptions::new(8, Method::SingleParticle)).unwrap();
    let o = FreeFermionOracle::new(&spec).unwrap().chern(8).unwrap();
    assert_eq!(c.chern, o.chern);
    assert_eq!(c.chern.abs(), 1);
    assert!(c.integrality_defect <= 1e-9);
}

#[test]
fn boson_chern_is_integer() {
    let spec = common::model(RecipeName::XyFluxBoson, 3);
    let c = chern_number(&spec, &ChernOptions::new(6, Method::ManyBody)).unwrap();
    assert!(c.integrality_defect <= 1e-9);
    let _ = PI;
}
