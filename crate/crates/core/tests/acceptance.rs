//! One PASS/FAIL line per acceptance criterion, written to stderr.

mod common;

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use hallq::conductance::{chern_number, kubo_curvature, loop_phase_conductance, quantization_report, ChernOptions, Method};
use hallq::diagnostics::{big_loop_overlap, translation_check, truncation_error_scan};
use hallq::hamiltonian::{symmetrize, Flux, ModelSpec};
use hallq::linalg::{eigh, op_norm, CMat};
use hallq::loops::{adiabatic_fidelity, axis_leg, stokes_product, FluxSystem, Representation, StokesMode};
use hallq::models::{make_model, FreeFermionOracle, ModelRecipe, RecipeName};
use hallq::quasiadiabatic::{Filter, FilterKind, IntegratorOptions};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, pass: bool, started: Instant, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    // straight to the stream so the line survives test output capture
    let _ = writeln!(std::io::stderr(), "criterion {n}: {verdict} ({:.1} s) {detail}", started.elapsed().as_secs_f64());
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// System with a spline filter at half the ground-state gap at zero flux.
fn half_gap_system(spec: ModelSpec, rep: Representation) -> FluxSystem {
    let probe = FluxSystem::new(spec.clone(), Filter::new(FilterKind::Spline, 1.0).unwrap(), rep).unwrap();
    let gap = probe.ground(&Flux::default()).unwrap().gap;
    FluxSystem::new(spec, Filter::new(FilterKind::Spline, gap / 2.0).unwrap(), rep).unwrap()
}

fn qwz(m: f64, l: usize) -> ModelSpec {
    make_model(&ModelRecipe::new(RecipeName::QwzFermion).with("m", m), l).unwrap()
}

#[test]
fn criterion_1_adiabatic_fidelity() {
    let t = Instant::now();
    let sys = half_gap_system(common::model(RecipeName::QwzFermion, 3), Representation::Slater);
    let delta = sys.filter().delta;
    let legs = [
        axis_leg(hallq::lattice::Axis::X, (0.0, 0.0), 1.2),
        axis_leg(hallq::lattice::Axis::Y, (1.2, 0.0), 0.9),
        axis_leg(hallq::lattice::Axis::X, (1.2, 0.9), -0.7),
    ];
    let pts = adiabatic_fidelity(&sys, &legs, 6, &IntegratorOptions::states().with_tol(1e-10)).unwrap();
    let worst = pts.iter().map(|p| p.fidelity).fold(f64::INFINITY, f64::min);
    let min_gap = pts.iter().map(|p| p.gap).fold(f64::INFINITY, f64::min);
    let pass = min_gap >= delta && worst >= 1.0 - 1e-7;
    report(1, pass, t, format!("min fidelity 1 - {:.2e}, min gap {min_gap:.4} >= delta {delta:.4}", 1.0 - worst));
    assert!(pass);
}

#[test]
fn criterion_2_stokes_product_identity() {
    let t = Instant::now();
    let sys = half_gap_system(common::model(RecipeName::XyFluxBoson, 3), Representation::Fock);
    let n = 4;
    let s = stokes_product(&sys, n, StokesMode::Unitary, &IntegratorOptions::unitaries()).unwrap();
    let res = s.product_residual.unwrap();
    let bound = (n * n) as f64 * 1e-7;
    let pass = sys.dim() <= 2000 && res <= bound;
    report(2, pass, t, format!("dim {}, residual {res:.3e} <= {bound:.1e}", sys.dim()));
    assert!(pass);
}

#[test]
fn criterion_3_small_loop_phase() {
    let t = Instant::now();
    let sys = half_gap_system(common::model(RecipeName::QwzFermion, 3), Representation::Slater);
    let rep = loop_phase_conductance(&sys, &[0.2, 0.1, 0.05], &IntegratorOptions::states().with_tol(1e-10)).unwrap();
    let dev: Vec<f64> = rep.phases.iter().map(|p| p.deviation).collect();
    let ratios: Vec<f64> = dev.windows(2).map(|w| w[1] / w[0]).collect();
    let modulus = rep.phases.iter().map(|p| (p.modulus - 1.0).abs()).fold(0.0, f64::max);
    let pass = ratios.iter().all(|&q| q <= 0.75) && modulus <= 1e-6;
    report(3, pass, t, format!("g0 {:.6}, deviations {}, ratios {ratios:.3?}, |1 - |p|| {modulus:.1e}", rep.g0, sci(&dev)));
    assert!(pass);
}

#[test]
fn criterion_4_chern_and_kubo_oracle() {
    let t = Instant::now();
    let spec = common::model(RecipeName::QwzFermion, 3);
    let oracle = FreeFermionOracle::new(&spec).unwrap();
    let c = chern_number(&spec, &ChernOptions::new(8, Method::ManyBody)).unwrap();
    let o = oracle.chern(8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut kubo_dev = 0.0f64;
    for _ in 0..5 {
        let f = Flux::xy(rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
        let k = kubo_curvature(&spec, &f, Method::ManyBody, 1e-12).unwrap();
        kubo_dev = kubo_dev.max((k.g - oracle.curvature(&f).unwrap()).abs());
    }
    let pass = c.integrality_defect <= 1e-9 && c.chern == o.chern && kubo_dev <= 1e-7;
    report(
        4,
        pass,
        t,
        format!("chern {} (defect {:.1e}), oracle {}, kubo deviation {kubo_dev:.1e}", c.chern, c.integrality_defect, o.chern),
    );
    assert!(pass);
}

#[test]
fn criterion_5_big_loop_trend() {
    let t = Instant::now();
    let opts = IntegratorOptions::states().with_tol(1e-10);
    let mut trivial = Vec::new();
    for l in [3, 4, 5] {
        let sys = FluxSystem::auto(common::model(RecipeName::TrivialProduct, l), Filter::new(FilterKind::Spline, 0.1).unwrap()).unwrap();
        trivial.push(big_loop_overlap(&sys, &opts).unwrap().measured);
    }
    let coupled: Vec<f64> =
        [3, 4, 5].iter().map(|&l| big_loop_overlap(&half_gap_system(qwz(-1.0, l), Representation::Slater), &opts).unwrap().measured).collect();
    // sizes below the integrator floor count as equal
    let floor = 1e-10;
    let monotone = coupled.windows(2).all(|w| w[1] <= w[0] || w[1] <= floor);
    let pass = trivial.iter().all(|&b| b <= 1e-8) && monotone;
    let default: Vec<f64> =
        [3, 4, 5].iter().map(|&l| big_loop_overlap(&half_gap_system(qwz(-0.25, l), Representation::Slater), &opts).unwrap().measured).collect();
    report(5, pass, t, format!("trivial B2 {}, qwz m=-1 B2 {} (floor {floor:.0e}); info: qwz m=-0.25 B2 {}", sci(&trivial), sci(&coupled), sci(&default)));
    assert!(pass);
}

#[test]
fn criterion_6_truncation_decay() {
    let t = Instant::now();
    let spec = common::model(RecipeName::BosonChain, 12);
    let s = truncation_error_scan(&spec, &Filter::new(FilterKind::Spline, 1.3).unwrap(), &[2, 3, 4, 5]).unwrap();
    let e: Vec<f64> = s.rows.iter().map(|r| r.error).collect();
    let pass = e.windows(2).all(|w| w[1] < w[0]) && e[3] <= 0.1 * e[0];
    report(6, pass, t, format!("errors for M = 2..5: {}", sci(&e)));
    assert!(pass);
}

/// Largest violation of the exact identities on one model; zero when all hold.
fn identity_violations(spec: &ModelSpec) -> Vec<String> {
    let mut bad = Vec::new();
    let sec = spec.sector().unwrap();
    let e0 = eigh(&spec.hamiltonian(&sec, &Flux::default()).unwrap().to_dense()).0;
    for (a, b) in [(0.7, 0.0), (1.9, -2.4), (PI, 0.5)] {
        let e = eigh(&spec.hamiltonian(&sec, &Flux::new(a, -a, b, -b)).unwrap().to_dense()).0;
        let d = (&e - &e0).amax();
        if d > 1e-10 {
            bad.push(format!("{} twist-anti-twist {d:e}", spec.id()));
        }
    }
    let bound = spec.q_max_bound() * spec.j_max() * spec.lattice().size() as f64;
    for f in [Flux::default(), Flux::xy(1.3, 2.2)] {
        for dir in [Flux::unit_x(), Flux::unit_y()] {
            let d = op_norm(&spec.derivative(&sec, &f, &dir, 1).unwrap().to_dense());
            if d > bound + 1e-10 {
                bad.push(format!("{} derivative {d} > {bound}", spec.id()));
            }
        }
    }
    let base = Flux::new(0.4, -0.2, 1.1, 0.3);
    let h = 1e-4;
    for dir in [Flux::unit_x(), Flux::unit_y()] {
        let d1 = spec.derivative(&sec, &base, &dir, 1).unwrap().to_dense();
        let d3 = op_norm(&spec.derivative(&sec, &base, &dir, 3).unwrap().to_dense());
        let hp = spec.hamiltonian(&sec, &base.offset(&dir, h)).unwrap().to_dense();
        let hm = spec.hamiltonian(&sec, &base.offset(&dir, -h)).unwrap().to_dense();
        let err = op_norm(&((hp - hm) / Complex64::new(2.0 * h, 0.0) - d1));
        if err > h * h / 6.0 * d3 * 1.01 + 1e-10 {
            bad.push(format!("{} finite difference {err:e}", spec.id()));
        }
    }
    for term in spec.terms() {
        let s: CMat = symmetrize(&term.op);
        if (symmetrize(&s) - &s).norm() > 1e-10 || op_norm(&s) > op_norm(&term.op) + 1e-10 {
            bad.push(format!("{} symmetrization", spec.id()));
        }
    }
    bad
}

#[test]
fn criterion_7_exact_identities() {
    let t = Instant::now();
    let zoo = common::dense_zoo();
    let bad: Vec<String> = zoo.iter().flat_map(identity_violations).collect();
    let pass = bad.is_empty();
    report(7, pass, t, format!("{} models, violations {bad:?}", zoo.len()));
    assert!(pass);
}

#[test]
fn criterion_8_quantization() {
    let t = Instant::now();
    let sys = half_gap_system(common::model(RecipeName::QwzFermion, 3), Representation::Slater);
    let q = quantization_report(&sys, 16, &IntegratorOptions::states().with_tol(1e-10)).unwrap();
    let pass = q.distance <= 0.05 && q.triangle_slack >= -1e-9;
    report(
        8,
        pass,
        t,
        format!(
            "sigma_tilde {:.4}, distance {:.4}, lhs {:.3e} <= B1 {:.2e} + B2 {:.2e} + B3 {:.2e}",
            q.sigma_tilde, q.distance, q.lhs, q.b1, q.b2, q.b3
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_translation_uniformity() {
    let t = Instant::now();
    let sys = half_gap_system(common::model(RecipeName::QwzFermion, 3), Representation::Slater);
    let basepoints = [(PI / 2.0, 0.0), (0.0, PI / 2.0), (PI / 2.0, PI / 2.0), (PI / 4.0, PI / 4.0)];
    let r_list = [0.1, 0.1 / 10f64.sqrt(), 0.01];
    let c = translation_check(&sys, &basepoints, &r_list, &IntegratorOptions::states().with_tol(1e-10)).unwrap();
    let tr = c.trend.as_ref().unwrap();
    let pass = tr.ys[0] <= 1e-3 && tr.slope >= 2.0;
    report(9, pass, t, format!("max differences {}, log-log slope {:.4}", sci(&tr.ys), tr.slope));
    assert!(pass);
}
