//! Kubo curvature, plaquette Chern numbers, small-loop phases and the
//! quantization report.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HallError, Result};
use crate::hamiltonian::{Flux, ModelSpec};
use crate::linalg::{eigh, CMat, CVec};
use crate::loops::{loop_state, FluxSystem};
use crate::quasiadiabatic::IntegratorOptions;
use crate::spectral::{ground_state, slater_ground, slater_overlap, solve_shifted, Spectrum, DEGENERACY_TOL, DENSE_THRESHOLD};

/// How ground states and curvature are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Many-body sector: dense below the threshold, Lanczos and CG above.
    ManyBody,
    /// Single-particle orbitals (quadratic fermion models only).
    SingleParticle,
}

impl Method {
    pub fn auto(spec: &ModelSpec) -> Self {
        if spec.is_quadratic() && spec.sector().map(|s| s.dim() > DENSE_THRESHOLD).unwrap_or(true) {
            Method::SingleParticle
        } else {
            Method::ManyBody
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub theta_x: f64,
    pub theta_y: f64,
    /// `2 Im⟨∂θy Ψ0|∂θx Ψ0⟩`.
    pub g: f64,
    pub gap: f64,
}

fn require_gap(gap: f64, flux: &Flux) -> Result<()> {
    if gap < DEGENERACY_TOL {
        return Err(HallError::Numerical(format!(
            "degenerate ground state at flux ({}, {}) (gap {gap:.3e})",
            flux.theta_x, flux.theta_y
        )));
    }
    Ok(())
}

/// `g = 2 Im Σ_{n>0} ⟨0|∂yH|n⟩⟨n|∂xH|0⟩ / (E_n − E_0)²`.
pub fn kubo_curvature(spec: &ModelSpec, flux: &Flux, method: Method, tol: f64) -> Result<CurvatureSample> {
    let (g, gap) = match method {
        Method::SingleParticle => kubo_single_particle(spec, flux)?,
        Method::ManyBody => kubo_many_body(spec, flux, tol)?,
    };
    Ok(CurvatureSample { theta_x: flux.theta_x, theta_y: flux.theta_y, g, gap })
}

fn kubo_many_body(spec: &ModelSpec, flux: &Flux, tol: f64) -> Result<(f64, f64)> {
    let sector = spec.sector()?;
    let h = spec.hamiltonian(&sector, flux)?;
    let dx = spec.derivative(&sector, flux, &Flux::unit_x(), 1)?;
    let dy = spec.derivative(&sector, flux, &Flux::unit_y(), 1)?;
    if h.dim() <= DENSE_THRESHOLD {
        let sp = Spectrum::of(&h.to_dense());
        let gap = if sp.energies.len() > 1 { sp.energies[1] - sp.energies[0] } else { f64::INFINITY };
        require_gap(gap, flux)?;
        let v = &sp.states;
        let ax = v.adjoint() * dx.to_dense() * v.column(0);
        let ay = v.adjoint() * dy.to_dense() * v.column(0);
        let mut s = Complex64::new(0.0, 0.0);
        for n in 1..sp.energies.len() {
            let de = sp.energies[n] - sp.energies[0];
            s += ay[n].conj() * ax[n] / (de * de);
        }
        return Ok((2.0 * s.im, gap));
    }
    let gs = ground_state(&h)?;
    require_gap(gs.gap, flux)?;
    let ux = solve_shifted(&h, gs.energy, &gs.psi, &dx.apply(&gs.psi), tol)?;
    let uy = solve_shifted(&h, gs.energy, &gs.psi, &dy.apply(&gs.psi), tol)?;
    Ok((2.0 * uy.dotc(&ux).im, gs.gap))
}

fn kubo_single_particle(spec: &ModelSpec, flux: &Flux) -> Result<(f64, f64)> {
    let q = spec.quadratic_hamiltonian(flux)?;
    let hx = spec.quadratic_derivative(flux, &Flux::unit_x(), 1)?.h;
    let hy = spec.quadratic_derivative(flux, &Flux::unit_y(), 1)?.h;
    let (e, v) = eigh(&q.h);
    let n = spec.charge();
    let gap = if n == 0 || n == e.len() { f64::INFINITY } else { e[n] - e[n - 1] };
    require_gap(gap, flux)?;
    let ax = v.adjoint() * hx * &v;
    let ay = v.adjoint() * hy * &v;
    let mut s = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for a in n..e.len() {
            let de = e[a] - e[i];
            s += ay[(i, a)] * ax[(a, i)] / (de * de);
        }
    }
    Ok((2.0 * s.im, gap))
}

/// Ground state at a grid point as a column block (vector or orbitals).
fn grid_state(spec: &ModelSpec, flux: &Flux, method: Method) -> Result<(CMat, f64)> {
    match method {
        Method::SingleParticle => {
            let g = slater_ground(&spec.quadratic_hamiltonian(flux)?, spec.charge())?;
            Ok((g.orbitals, g.gap))
        }
        Method::ManyBody => {
            let sector = spec.sector()?;
            let gs = ground_state(&spec.hamiltonian(&sector, flux)?)?;
            let psi: &CVec = &gs.psi;
            Ok((CMat::from_column_slice(psi.len(), 1, psi.as_slice()), gs.gap))
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridPoint {
    pub i: usize,
    pub j: usize,
    pub theta_x: f64,
    pub theta_y: f64,
    pub gap: f64,
    /// Kubo curvature when requested.
    pub g: Option<f64>,
    /// Offset applied to dodge a degenerate point.
    pub perturbed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChernResult {
    pub grid_n: usize,
    pub method: Method,
    pub raw: f64,
    pub chern: i64,
    pub integrality_defect: f64,
    /// Plaquette Berry phases, row-major in `(j, i)`.
    pub plaquettes: Vec<f64>,
    pub points: Vec<GridPoint>,
    /// `(1/2π) Σ g (2π/n)²` when curvature was sampled.
    pub trapezoid: Option<f64>,
    pub min_gap: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChernOptions {
    pub grid_n: usize,
    pub method: Method,
    /// Also evaluate the Kubo curvature at every grid point.
    pub with_curvature: bool,
    /// Flux offset applied to degenerate grid points.
    pub perturbation: f64,
    pub tol: f64,
}

impl ChernOptions {
    pub fn new(grid_n: usize, method: Method) -> Self {
        ChernOptions { grid_n, method, with_curvature: false, perturbation: 1e-3, tol: 1e-12 }
    }
}

/// Plaquette-phase Chern number over the `n × n` flux grid.
pub fn chern_number(spec: &ModelSpec, opts: &ChernOptions) -> Result<ChernResult> {
    let n = opts.grid_n;
    if n < 2 {
        return Err(HallError::Validation("Chern grid must be at least 2x2".into()));
    }
    let step = 2.0 * PI / n as f64;
    let samples: Vec<(CMat, GridPoint)> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % n, k / n);
            let base = Flux::xy(i as f64 * step, j as f64 * step);
            let (mut state, mut gap) = grid_state(spec, &base, opts.method)?;
            let mut flux = base;
            let mut perturbed = false;
            if gap < DEGENERACY_TOL {
                flux = base.offset(&Flux::xy(1.0, 1.0), opts.perturbation);
                let s = grid_state(spec, &flux, opts.method)?;
                if s.1 < DEGENERACY_TOL {
                    return Err(HallError::Numerical(format!(
                        "degenerate ground state at grid point ({}, {}) even after perturbation",
                        base.theta_x, base.theta_y
                    )));
                }
                (state, gap) = s;
                perturbed = true;
            }
            let g = if opts.with_curvature { Some(kubo_curvature(spec, &flux, opts.method, opts.tol)?.g) } else { None };
            Ok((state, GridPoint { i, j, theta_x: flux.theta_x, theta_y: flux.theta_y, gap, g, perturbed }))
        })
        .collect::<Result<_>>()?;
    let at = |i: usize, j: usize| &samples[(j % n) * n + (i % n)].0;
    let plaquettes: Vec<f64> = (0..n * n)
        .map(|k| {
            let (i, j) = (k % n, k / n);
            let c = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
            let prod = (0..4).fold(Complex64::new(1.0, 0.0), |p, q| p * slater_overlap(c[q], c[(q + 1) % 4]));
            -prod.arg()
        })
        .collect();
    let raw = plaquettes.iter().sum::<f64>() / (2.0 * PI);
    let points: Vec<GridPoint> = samples.into_iter().map(|s| s.1).collect();
    let trapezoid = if opts.with_curvature {
        Some(points.iter().map(|p| p.g.unwrap_or(0.0)).sum::<f64>() * step * step / (2.0 * PI))
    } else {
        None
    };
    let min_gap = points.iter().map(|p| p.gap).fold(f64::INFINITY, f64::min);
    Ok(ChernResult {
        grid_n: n,
        method: opts.method,
        raw,
        chern: raw.round() as i64,
        integrality_defect: (raw - raw.round()).abs(),
        plaquettes,
        points,
        trapezoid,
        min_gap,
    })
}

/// `Δ(0) − 2 d · sup‖∂H‖` along a path at `L1` flux distance `d` from its start.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GapBound {
    pub gap_start: f64,
    pub derivative_bound: f64,
    pub distance: f64,
    pub bound: f64,
    pub measured_min: f64,
    pub vacuous: bool,
    pub holds: bool,
}

/// Gap estimate for the points `samples`, all compared against `start`.
pub fn gap_lower_bound(sys: &FluxSystem, start: &Flux, samples: &[Flux]) -> Result<GapBound> {
    let spec = sys.spec();
    let gap_start = sys.ground(start)?.gap;
    let derivative_bound = spec.q_max_bound() * spec.j_max() * spec.lattice().size() as f64;
    let mut distance = 0.0f64;
    let mut measured_min = gap_start;
    for f in samples {
        let d = (f.theta_x - start.theta_x).abs()
            + (f.theta_y - start.theta_y).abs()
            + (f.phi_x - start.phi_x).abs()
            + (f.phi_y - start.phi_y).abs();
        distance = distance.max(d);
        measured_min = measured_min.min(gap_at(sys, f)?);
    }
    let bound = gap_start - 2.0 * distance * derivative_bound;
    Ok(GapBound {
        gap_start,
        derivative_bound,
        distance,
        bound,
        measured_min,
        vacuous: bound <= 0.0,
        holds: measured_min >= bound - 1e-12,
    })
}

fn gap_at(sys: &FluxSystem, f: &Flux) -> Result<f64> {
    match sys.ground(f) {
        Ok(g) => Ok(g.gap),
        Err(HallError::Numerical(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LoopPhase {
    pub r: f64,
    pub overlap: Complex64,
    pub modulus: f64,
    /// `φ(r) = arg⟨Ψ0|Ψ⟲(r)⟩`.
    pub phi: f64,
    pub phi_over_r2: f64,
    /// `|φ(r)/r² − g(0,0)|`.
    pub deviation: f64,
    pub min_gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LoopPhaseReport {
    pub g0: f64,
    pub gap0: f64,
    /// `(16 Q_max (J/γ) L)⁻¹`, reported only.
    pub radius_bound: f64,
    pub phases: Vec<LoopPhase>,
}

/// Small-loop phases `φ(r)/r²` compared against the Kubo curvature at the origin.
pub fn loop_phase_conductance(sys: &FluxSystem, r_list: &[f64], opts: &IntegratorOptions) -> Result<LoopPhaseReport> {
    let spec = sys.spec();
    let origin = Flux::default();
    let k = kubo_curvature(spec, &origin, Method::auto(spec), 1e-12)?;
    let radius_bound = 1.0 / (16.0 * spec.q_max_bound() * spec.j_max() / k.gap * spec.lattice().size() as f64);
    let phases = r_list
        .par_iter()
        .map(|&r| {
            let ev = loop_state(sys, (0.0, 0.0), r, opts)?;
            let phi = ev.overlap.arg();
            Ok(LoopPhase {
                r,
                overlap: ev.overlap,
                modulus: ev.overlap.norm(),
                phi,
                phi_over_r2: phi / (r * r),
                deviation: (phi / (r * r) - k.g).abs(),
                min_gap: ev.report.min_gap,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LoopPhaseReport { g0: k.g, gap0: k.gap, radius_bound, phases })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuantizationReport {
    pub model_id: String,
    #[serde(rename = "L")]
    pub l: usize,
    /// `σ_xy h/e² = 2π g(0,0)`.
    pub sigma_tilde: f64,
    pub nearest_integer: i64,
    pub distance: f64,
    #[serde(rename = "B1")]
    pub b1: f64,
    #[serde(rename = "B2")]
    pub b2: f64,
    #[serde(rename = "B3")]
    pub b3: f64,
    /// `|1 − e^{2πiσ̃}|`.
    pub lhs: f64,
    /// `B1 + B2 + B3 − lhs`.
    pub triangle_slack: f64,
    /// `(√2/2π) |1 − e^{2πiσ̃}|`.
    pub trig_bound: f64,
    /// `distance ≤ trig_bound` (valid whenever `distance < 0.44`).
    pub trig_holds: bool,
    pub r_used: f64,
    pub stokes_n: usize,
    #[serde(rename = "Delta_used")]
    pub delta_used: f64,
    pub gap0: f64,
    pub p_small: Complex64,
    pub p_big: Complex64,
}

/// Assembles `σ̃`, the three bound terms and the integer distance for loop side `r = 2π/N`.
pub fn quantization_report(sys: &FluxSystem, stokes_n: usize, opts: &IntegratorOptions) -> Result<QuantizationReport> {
    if stokes_n == 0 {
        return Err(HallError::Validation("N must be at least 1".into()));
    }
    let spec = sys.spec();
    let origin = Flux::default();
    let k = kubo_curvature(spec, &origin, Method::auto(spec), 1e-12)?;
    let r = 2.0 * PI / stokes_n as f64;
    let (small, big) = rayon::join(|| loop_state(sys, (0.0, 0.0), r, opts), || loop_state(sys, (0.0, 0.0), 2.0 * PI, opts));
    let (p_small, p_big) = (small?.overlap, big?.overlap);
    let sigma = 2.0 * PI * k.g;
    let target = Complex64::from_polar(1.0, 2.0 * PI * sigma);
    let p_pow = p_small.powi((stokes_n * stokes_n) as i32);
    let b1 = (p_pow - target).norm();
    let b2 = (Complex64::new(1.0, 0.0) - p_big).norm();
    let b3 = (p_big - p_pow).norm();
    let lhs = (Complex64::new(1.0, 0.0) - target).norm();
    let n = sigma.round();
    let trig_bound = std::f64::consts::SQRT_2 / (2.0 * PI) * lhs;
    Ok(QuantizationReport {
        model_id: spec.id().to_string(),
        l: spec.lattice().size(),
        sigma_tilde: sigma,
        nearest_integer: n as i64,
        distance: (sigma - n).abs(),
        b1,
        b2,
        b3,
        lhs,
        triangle_slack: b1 + b2 + b3 - lhs,
        trig_bound,
        trig_holds: (sigma - n).abs() <= trig_bound + 1e-12,
        r_used: r,
        stokes_n,
        delta_used: sys.filter().delta,
        gap0: k.gap,
        p_small,
        p_big,
    })
}
