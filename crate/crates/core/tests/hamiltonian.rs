mod common;

use std::f64::consts::PI;

use hallq::fock::{LocalSpace, ModeLayout, Statistics};
use hallq::hamiltonian::{symmetrize, validate_terms, Flux, Term, TwistRule};
use hallq::lattice::TorusLattice;
use hallq::linalg::{eigh, op_norm, CMat};
use hallq::models::{make_model, ModelRecipe, RecipeName};
use num_complex::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `(1/n) Σ_k e^{iθ_k Q} op e^{−iθ_k Q}` on a local space with `Q` the total occupation.
fn theta_average(op: &CMat, n: usize) -> CMat {
    let d = op.nrows();
    let mut acc = CMat::zeros(d, d);
    for k in 0..n {
        let th = 2.0 * PI * k as f64 / n as f64;
        let u = CMat::from_fn(d, d, |a, b| if a == b { Complex64::from_polar(1.0, th * a.count_ones() as f64) } else { c(0.0, 0.0) });
        acc += &u * op * u.adjoint();
    }
    acc / c(n as f64, 0.0)
}

#[test]
fn symmetrize_examples() {
    let ls = LocalSpace::new(vec![0, 1], Statistics::HardcoreBoson);
    let hop = ls.hopping(0, 1, c(1.0, 0.0));
    assert!((symmetrize(&hop) - &hop).norm() < 1e-15);
    let pair = ls.creator(0) * ls.creator(1);
    let pairing = &pair + pair.adjoint();
    assert!(symmetrize(&pairing).norm() < 1e-15);
    let mixed = ls.number(0) + &pairing;
    assert!((symmetrize(&mixed) - ls.number(0)).norm() < 1e-15);
    assert!((theta_average(&mixed, 16) - symmetrize(&mixed)).norm() < 1e-12);
}

#[test]
fn symmetrize_matches_theta_average_on_random_operator() {
    let d = 8;
    let raw = CMat::from_fn(d, d, |a, b| c(((a * 7 + b * 3) % 5) as f64 - 2.0, ((a + 2 * b) % 3) as f64 - 1.0));
    let op = &raw + raw.adjoint();
    let s = symmetrize(&op);
    assert!((theta_average(&op, 16) - &s).norm() < 1e-12);
    assert!((symmetrize(&s) - &s).norm() < 1e-15);
    assert!(op_norm(&s) <= op_norm(&op) + 1e-12);
}

fn one_site_layout(n: usize) -> ModeLayout {
    ModeLayout { n_sites: n, orbitals: 1, statistics: Statistics::HardcoreBoson }
}

#[test]
fn validation_strength_range_and_charge() {
    let lat = TorusLattice::square(4).unwrap();
    let layout = one_site_layout(16);
    let ls = LocalSpace::new(vec![0], Statistics::HardcoreBoson);
    let onsite = Term::new(vec![0], vec![0], ls.number(0) * c(0.75, 0.0));
    let rep = validate_terms(&lat, &layout, 1, 2, 0.75, &[onsite]);
    assert!(rep.pass);
    assert!((rep.strength - 0.75).abs() < 1e-15);

    // sites (1,1) and (3,1) are at distance 2 = R + 1
    let far = lat.site(3, 1);
    let ls2 = LocalSpace::new(vec![0, far], Statistics::HardcoreBoson);
    let long = Term::new(vec![0, far], vec![0, far], ls2.hopping(0, far, c(1.0, 0.0)));
    let rep = validate_terms(&lat, &layout, 1, 2, 1.0, &[long]);
    assert!(!rep.pass);
    assert!(rep.violations.iter().any(|v| v.contains("diameter") || v.contains("range")));

    let near = lat.site(2, 1);
    let ls3 = LocalSpace::new(vec![0, near], Statistics::HardcoreBoson);
    let pair = ls3.creator(0) * ls3.creator(near);
    let op = &pair + pair.adjoint();
    let q = ls3.number(0) + ls3.number(near);
    let direct = op_norm(&(&q * &op - &op * &q));
    let rep = validate_terms(&lat, &layout, 1, 2, 1.0, &[Term::new(vec![0, near], vec![0, near], op)]);
    assert!(!rep.pass);
    assert!((rep.charge_residual - direct).abs() < 1e-12);
}

#[test]
fn boundary_hop_picks_up_conjugation_phase() {
    // e^{iθ n_0} (b†_0 b_1 + h.c.) e^{−iθ n_0}
    let th = 0.37;
    let ls = LocalSpace::new(vec![0, 1], Statistics::HardcoreBoson);
    let hop = ls.hopping(0, 1, c(1.0, 0.0));
    let u = CMat::from_fn(4, 4, |a, b| if a == b { Complex64::from_polar(1.0, th * (a & 1) as f64) } else { c(0.0, 0.0) });
    let conj = &u * &hop * u.adjoint();
    // |01⟩ ↔ |10⟩ with bit 0 = mode 0
    assert!((conj[(1, 2)] - Complex64::from_polar(1.0, th)).norm() < 1e-15);
    assert!((conj[(2, 1)] - Complex64::from_polar(1.0, -th)).norm() < 1e-15);
}

#[test]
fn zero_flux_and_full_turn_reproduce_h0() {
    for spec in common::dense_zoo() {
        let sec = spec.sector().unwrap();
        let h0 = spec.hamiltonian(&sec, &Flux::default()).unwrap().to_dense();
        let mut direct = CMat::zeros(sec.dim(), sec.dim());
        let mut asm = hallq::fock::SectorAssembler::new(&sec);
        for t in spec.terms() {
            asm.add(&t.modes, &t.op).unwrap();
        }
        direct += asm.finish().to_dense();
        assert!((&h0 - direct).norm() < 1e-12, "{}", spec.id());
        let turn = spec.hamiltonian(&sec, &Flux::new(2.0 * PI, 2.0 * PI, 2.0 * PI, 2.0 * PI)).unwrap().to_dense();
        assert!((&h0 - turn).norm() < 1e-12, "{}", spec.id());
    }
}

#[test]
fn bulk_terms_do_not_see_flux() {
    let spec = common::model(RecipeName::XyFluxBoson, 4);
    let f = Flux::new(0.3, -1.2, 2.0, 0.4);
    let mut bulk = 0;
    for n in 0..spec.terms().len() {
        if spec.rules(n) == (TwistRule::Plain, TwistRule::Plain) {
            bulk += 1;
            assert!((spec.twisted_term(n, &f) - &spec.terms()[n].op).norm() < 1e-15);
        }
    }
    assert!(bulk > 0);
}

#[test]
fn twist_anti_twist_spectrum_equals_h0() {
    for spec in common::dense_zoo() {
        let sec = spec.sector().unwrap();
        let e0 = eigh(&spec.hamiltonian(&sec, &Flux::default()).unwrap().to_dense()).0;
        for (t, tp) in [(0.7, 0.0), (1.9, -2.4), (PI, 0.5)] {
            let h = spec.hamiltonian(&sec, &Flux::new(t, -t, tp, -tp)).unwrap().to_dense();
            let e = eigh(&h).0;
            let d = (&e - &e0).amax();
            assert!(d < 1e-10, "{} ({t}, {tp}): {d:e}", spec.id());
        }
    }
}

#[test]
fn flux_derivative_finite_difference_is_second_order() {
    for spec in common::dense_zoo() {
        let sec = spec.sector().unwrap();
        let base = Flux::new(0.4, -0.2, 1.1, 0.3);
        for dir in [Flux::unit_x(), Flux::unit_y(), Flux::new(0.0, 1.0, 0.0, 0.0), Flux::new(0.0, 0.0, 0.0, 1.0)] {
            let d1 = spec.derivative(&sec, &base, &dir, 1).unwrap().to_dense();
            let d3 = op_norm(&spec.derivative(&sec, &base, &dir, 3).unwrap().to_dense());
            let h = 1e-4;
            let hp = spec.hamiltonian(&sec, &base.offset(&dir, h)).unwrap().to_dense();
            let hm = spec.hamiltonian(&sec, &base.offset(&dir, -h)).unwrap().to_dense();
            let fd = (hp - hm) / c(2.0 * h, 0.0);
            let err = op_norm(&(fd - &d1));
            // Taylor remainder h²/6 ‖∂³H‖ plus cancellation noise
            assert!(err <= h * h / 6.0 * d3 * 1.01 + 1e-10, "{}: {err:e} vs {:e}", spec.id(), h * h / 6.0 * d3);
        }
    }
}

#[test]
fn derivative_bound_holds_on_every_model() {
    for spec in common::dense_zoo() {
        let sec = spec.sector().unwrap();
        let bound = spec.q_max_bound() * spec.j_max() * spec.lattice().size() as f64;
        for f in [Flux::default(), Flux::xy(1.3, 2.2)] {
            let dx = op_norm(&spec.derivative(&sec, &f, &Flux::unit_x(), 1).unwrap().to_dense());
            let dy = op_norm(&spec.derivative(&sec, &f, &Flux::unit_y(), 1).unwrap().to_dense());
            assert!(dx <= bound + 1e-10 && dy <= bound + 1e-10, "{}: {dx} {dy} > {bound}", spec.id());
        }
    }
}

#[test]
fn symmetrization_is_idempotent_on_zoo_terms() {
    for spec in common::dense_zoo() {
        for t in spec.terms() {
            let s = symmetrize(&t.op);
            assert!((symmetrize(&s) - &s).norm() < 1e-15);
            assert!(op_norm(&s) <= op_norm(&t.op) + 1e-12);
            // zoo terms are already charge conserving
            assert!((&s - &t.op).norm() < 1e-15);
        }
    }
}

#[test]
fn model_without_y_strip_terms_has_zero_y_derivative() {
    let spec = make_model(&ModelRecipe::new(RecipeName::TrivialProduct), 3).unwrap();
    let sec = spec.sector().unwrap();
    let d = spec.derivative(&sec, &Flux::xy(0.2, 0.9), &Flux::unit_y(), 1).unwrap().to_dense();
    assert!(d.norm() == 0.0);
}

#[test]
fn trivial_product_gap_is_smallest_level_spacing() {
    let spec = make_model(&ModelRecipe::new(RecipeName::TrivialProduct), 4).unwrap();
    let mut levels: Vec<f64> = spec.terms().iter().map(|t| t.op[(1, 1)].re).collect();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sec = spec.sector().unwrap();
    let e = eigh(&spec.hamiltonian(&sec, &Flux::default()).unwrap().to_dense()).0;
    assert!(((e[1] - e[0]) - (levels[1] - levels[0])).abs() < 1e-12);
}

#[test]
fn interacting_qwz_without_coupling_matches_free_model() {
    let free = make_model(&ModelRecipe::new(RecipeName::QwzFermion).with_charge(2), 3).unwrap();
    let off = make_model(&ModelRecipe::new(RecipeName::QwzInteracting).with("v", 0.0).with_charge(2), 3).unwrap();
    let f = Flux::xy(0.5, 1.5);
    let a = eigh(&free.hamiltonian(&free.sector().unwrap(), &f).unwrap().to_dense()).0;
    let b = eigh(&off.hamiltonian(&off.sector().unwrap(), &f).unwrap().to_dense()).0;
    assert!((a - b).amax() < 1e-12);
}

#[test]
fn qwz_half_filling_is_gapped_at_origin() {
    let spec = make_model(&ModelRecipe::new(RecipeName::QwzFermion), 3).unwrap();
    let q = spec.quadratic_hamiltonian(&Flux::default()).unwrap();
    let e = eigh(&q.h).0;
    let n = spec.charge();
    assert!(e[n] - e[n - 1] > 0.5);
}
