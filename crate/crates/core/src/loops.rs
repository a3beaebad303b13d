//! Flux-space evolution: axis unitaries `U_X`, `U_Y`, the path operators
//! `V` and `W`, counter-clockwise loops, loop states and the discrete
//! Stokes decomposition of the big loop into `N²` small ones.
//!
//! Paths are lists of straight [`Leg`]s. The inverse of a leg is the same
//! segment integrated backwards from its end.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HallError, Result};
use crate::fock::Sector;
use crate::hamiltonian::{Flux, ModelSpec};
use crate::lattice::{Axis, Region};
use crate::linalg::{conjugate, conjugate_adj, eigh, matmul, max_abs, matmul_adj, op_norm, unitarity_defect, CMat};
use crate::quasiadiabatic::{
    evolve_path, DenseField, FieldSample, Filter, GeneratorField, IntegratorOptions, Leg, LegReport, QuadraticField, TruncatedField,
};
use crate::spectral::{slater_ground, slater_overlap, Spectrum, DEGENERACY_TOL, DENSE_THRESHOLD};

/// How many-body states are stored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Sector state vectors (one column).
    Fock,
    /// Occupied single-particle orbitals of a Slater determinant (quadratic fermions only).
    Slater,
}

/// Unit flux direction `∂θx` or `∂θy`.
pub fn axis_unit(axis: Axis) -> Flux {
    match axis {
        Axis::X => Flux::unit_x(),
        Axis::Y => Flux::unit_y(),
    }
}

/// Ground state in the system's representation.
#[derive(Clone, Debug)]
pub struct Ground {
    pub energy: f64,
    pub gap: f64,
    pub state: CMat,
}

/// A model, its filter and the representation used for dynamics.
#[derive(Clone, Debug)]
pub struct FluxSystem {
    spec: ModelSpec,
    sector: Option<Sector>,
    filter: Filter,
    rep: Representation,
    truncation: Option<(usize, Option<Region>)>,
}

impl FluxSystem {
    pub fn new(spec: ModelSpec, filter: Filter, rep: Representation) -> Result<Self> {
        let sector = match rep {
            Representation::Fock => {
                let s = spec.sector()?;
                if s.dim() > DENSE_THRESHOLD {
                    return Err(HallError::Validation(format!(
                        "sector dimension {} exceeds the dense dynamics cap {DENSE_THRESHOLD}; use a smaller L or charge",
                        s.dim()
                    )));
                }
                Some(s)
            }
            Representation::Slater => {
                if !spec.is_quadratic() {
                    return Err(HallError::Validation(format!("{} is not quadratic; Slater dynamics unavailable", spec.id())));
                }
                None
            }
        };
        Ok(FluxSystem { spec, sector, filter, rep, truncation: None })
    }

    /// Slater dynamics for quadratic fermion models, Fock otherwise.
    pub fn auto(spec: ModelSpec, filter: Filter) -> Result<Self> {
        let rep = if spec.is_quadratic() { Representation::Slater } else { Representation::Fock };
        Self::new(spec, filter, rep)
    }

    /// Replaces the exact generator by its radius-`m` truncation (Fock only).
    pub fn truncated(mut self, m: usize, source: Option<Region>) -> Result<Self> {
        if self.rep != Representation::Fock {
            return Err(HallError::Validation("truncated generators need the Fock representation".into()));
        }
        self.truncation = Some((m, source));
        Ok(self)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn sector(&self) -> Option<&Sector> {
        self.sector.as_ref()
    }

    pub fn filter(&self) -> &Filter {
        &self.filter
    }

    pub fn representation(&self) -> Representation {
        self.rep
    }

    /// Rows of a state or unitary.
    pub fn dim(&self) -> usize {
        match &self.sector {
            Some(s) => s.dim(),
            None => self.spec.layout().n_modes(),
        }
    }

    pub fn identity(&self) -> CMat {
        CMat::identity(self.dim(), self.dim())
    }

    pub fn ground(&self, flux: &Flux) -> Result<Ground> {
        match &self.sector {
            Some(sec) => {
                let h = self.spec.hamiltonian(sec, flux)?.to_dense();
                let g = Spectrum::of(&h).ground_state().require_unique()?;
                Ok(Ground { energy: g.energy, gap: g.gap, state: CMat::from_column_slice(g.psi.len(), 1, g.psi.as_slice()) })
            }
            None => {
                let q = self.spec.quadratic_hamiltonian(flux)?;
                let g = slater_ground(&q, self.spec.charge())?;
                if g.degenerate {
                    return Err(HallError::Numerical(format!("degenerate Slater ground state (gap {:.3e})", g.gap)));
                }
                Ok(Ground { energy: g.energy, gap: g.gap, state: g.orbitals })
            }
        }
    }

    /// Many-body overlap `⟨a|b⟩` (a determinant for Slater states).
    pub fn overlap(&self, a: &CMat, b: &CMat) -> Complex64 {
        slater_overlap(a, b)
    }

    /// Many-body distance `‖a − b‖ = sqrt(2 − 2 Re⟨a|b⟩)` of normalized states.
    pub fn distance(&self, a: &CMat, b: &CMat) -> f64 {
        (2.0 - 2.0 * self.overlap(a, b).re).max(0.0).sqrt()
    }

    fn with_field<T>(&self, f: impl FnOnce(&dyn GeneratorField) -> T) -> T {
        match (&self.sector, &self.truncation) {
            (Some(sec), None) => f(&DenseField::new(&self.spec, sec, self.filter)),
            (Some(sec), Some((m, source))) => f(&TruncatedField {
                spec: &self.spec,
                sector: sec,
                filter: self.filter,
                m: *m,
                source: source.clone(),
            }),
            (None, _) => f(&QuadraticField::new(&self.spec, self.filter)),
        }
    }

    /// Applies the ordered legs to `y` (a state or a full unitary).
    pub fn evolve(&self, legs: &[Leg], y: &CMat, opts: &IntegratorOptions) -> Result<(CMat, LegReport)> {
        self.with_field(|f| evolve_path(f, legs, y, opts))
    }

    /// Dense generator `D(flux)` along `dir` in the system's representation.
    pub fn generator(&self, flux: &Flux, dir: &Flux) -> Result<CMat> {
        match (&self.sector, &self.truncation) {
            (Some(sec), None) => Ok(DenseField::new(&self.spec, sec, self.filter).generator(flux, dir)?.0),
            (Some(sec), Some((m, source))) => TruncatedField {
                spec: &self.spec,
                sector: sec,
                filter: self.filter,
                m: *m,
                source: source.clone(),
            }
            .generator(flux, dir),
            (None, _) => Ok(QuadraticField::new(&self.spec, self.filter).generator(flux, dir)?.0),
        }
    }
}

/// Exact parallel transport `∂Ψ = −(1 − P0)(H − E0)⁻¹ ∂H Ψ` in a dense sector.
pub struct TransportField<'a> {
    pub spec: &'a ModelSpec,
    pub sector: &'a Sector,
}

impl GeneratorField for TransportField<'_> {
    fn dim(&self) -> usize {
        self.sector.dim()
    }

    /// Returns `dY/dt` directly (not `i D Y`).
    fn apply(&self, flux: &Flux, dir: &Flux, y: &CMat) -> Result<(CMat, FieldSample)> {
        let h = self.spec.hamiltonian(self.sector, flux)?.to_dense();
        let a = self.spec.derivative(self.sector, flux, dir, 1)?.to_dense();
        let (e, v) = eigh(&h);
        let gap = if e.len() > 1 { e[1] - e[0] } else { f64::INFINITY };
        if gap < DEGENERACY_TOL {
            return Err(HallError::Numerical(format!(
                "gap collapsed during transport at ({}, {})",
                flux.theta_x, flux.theta_y
            )));
        }
        let mut ab = conjugate_adj(&v, &a);
        for m in 0..e.len() {
            let w = if m == 0 { 0.0 } else { -1.0 / (e[m] - e[0]) };
            for k in 0..e.len() {
                ab[(m, k)] *= w;
            }
        }
        Ok((matmul(&conjugate(&v, &ab), y), FieldSample { gap }))
    }
}

#[derive(Clone, Debug)]
pub struct Transport {
    pub state: CMat,
    /// `arg⟨Ψ_start|Ψ_end⟩`.
    pub phase: f64,
    pub overlap_with_ground: Complex64,
    /// `|⟨Ψ′|∂Ψ′⟩|` at the end point.
    pub connection: f64,
    pub report: LegReport,
}

/// Transports the ground state at the start of `legs` along them.
pub fn parallel_transport(spec: &ModelSpec, legs: &[Leg], opts: &IntegratorOptions) -> Result<Transport> {
    let sector = spec.sector()?;
    if sector.dim() > DENSE_THRESHOLD {
        return Err(HallError::Validation("parallel transport needs a dense sector".into()));
    }
    let field = TransportField { spec, sector: &sector };
    let start = legs.first().map(|l| l.start).unwrap_or_default();
    let end = legs.last().map(|l| l.end()).unwrap_or_default();
    let ground = |f: &Flux| -> Result<CMat> {
        let g = Spectrum::of(&spec.hamiltonian(&sector, f)?.to_dense()).ground_state().require_unique()?;
        Ok(CMat::from_column_slice(g.psi.len(), 1, g.psi.as_slice()))
    };
    let psi0 = ground(&start)?;
    let (y, report) = evolve_path(&field, legs, &psi0, opts)?;
    let dir = legs.last().map(|l| l.dir).unwrap_or_default();
    let dy = field.apply(&end, &dir, &y)?.0;
    let connection = slater_overlap(&y, &dy).norm();
    Ok(Transport {
        phase: slater_overlap(&psi0, &y).arg(),
        overlap_with_ground: slater_overlap(&ground(&end)?, &y),
        state: y,
        connection,
        report,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FidelityPoint {
    pub flux: Flux,
    /// `|⟨Ψ0(θ)|Φ_Δ(θ)⟩|`.
    pub fidelity: f64,
    pub gap: f64,
}

/// Quasi-adiabatic evolution of `Ψ0` along `legs`, compared with the
/// instantaneous ground state at `checkpoints` evenly spaced points per leg.
pub fn adiabatic_fidelity(
    sys: &FluxSystem,
    legs: &[Leg],
    checkpoints: usize,
    opts: &IntegratorOptions,
) -> Result<Vec<FidelityPoint>> {
    let start = legs.first().map(|l| l.start).unwrap_or_default();
    let mut y = sys.ground(&start)?.state;
    let mut out = Vec::new();
    for leg in legs {
        let piece = leg.length / checkpoints.max(1) as f64;
        for c in 0..checkpoints.max(1) {
            let sub = Leg::new(leg.start.offset(&leg.dir, c as f64 * piece), leg.dir, piece);
            y = sys.evolve(&[sub], &y, opts)?.0;
            let g = sys.ground(&sub.end())?;
            out.push(FidelityPoint { flux: sub.end(), fidelity: sys.overlap(&g.state, &y).norm(), gap: g.gap });
        }
    }
    Ok(out)
}

/// `U_X(θx, θy, r)` or `U_Y(θx, θy, r)` as a single leg.
pub fn axis_leg(axis: Axis, at: (f64, f64), length: f64) -> Leg {
    Leg::new(Flux::xy(at.0, at.1), axis_unit(axis), length)
}

/// Legs of `V[θ → φ]`: first along y at `θx`, then along x at `φy`.
pub fn v_legs(from: (f64, f64), to: (f64, f64)) -> Vec<Leg> {
    vec![axis_leg(Axis::Y, from, to.1 - from.1), axis_leg(Axis::X, (from.0, to.1), to.0 - from.0)]
}

/// Legs of `W[θ → φ]`: first along x at `θy`, then along y at `φx`.
pub fn w_legs(from: (f64, f64), to: (f64, f64)) -> Vec<Leg> {
    vec![axis_leg(Axis::X, from, to.0 - from.0), axis_leg(Axis::Y, (to.0, from.1), to.1 - from.1)]
}

/// The adjoint path: legs reversed, each integrated backwards from its end.
pub fn inverse_legs(legs: &[Leg]) -> Vec<Leg> {
    legs.iter().rev().map(|l| Leg::new(l.end(), l.dir, -l.length)).collect()
}

/// `V⟲(θ, r) = V†[θ → θ+r] W[θ → θ+r]`: counter-clockwise square from `θ`.
pub fn loop_legs(base: (f64, f64), r: f64) -> Vec<Leg> {
    let to = (base.0 + r, base.1 + r);
    let mut legs = w_legs(base, to);
    legs.extend(inverse_legs(&v_legs(base, to)));
    legs
}

/// `V†[0 → θ] V⟲(θ, r) V[0 → θ]`: transport out, loop, transport back.
pub fn based_loop_legs(base: (f64, f64), r: f64) -> Vec<Leg> {
    let out = v_legs((0.0, 0.0), base);
    let mut legs = out.clone();
    legs.extend(loop_legs(base, r));
    legs.extend(inverse_legs(&out));
    legs
}

/// Integrated flux-space path with its output state and overlap.
#[derive(Clone, Debug)]
pub struct LoopEvolution {
    pub legs: Vec<Leg>,
    pub unitary: Option<CMat>,
    pub final_state: CMat,
    /// `⟨Ψ0|final⟩`.
    pub overlap: Complex64,
    pub report: LegReport,
    pub unitarity_defect: f64,
}

impl LoopEvolution {
    pub fn summary(&self) -> LoopSummary {
        LoopSummary {
            overlap: self.overlap,
            modulus: self.overlap.norm(),
            phase: self.overlap.arg(),
            accepted_steps: self.report.accepted,
            rejected_steps: self.report.rejected,
            min_gap: self.report.min_gap,
            unitarity_defect: self.unitarity_defect,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LoopSummary {
    pub overlap: Complex64,
    pub modulus: f64,
    pub phase: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub min_gap: f64,
    pub unitarity_defect: f64,
}

fn check_unitarity(defect: f64, opts: &IntegratorOptions) -> Result<()> {
    if defect > 100.0 * opts.tol {
        return Err(HallError::Numerical(format!("unitarity defect {defect:.3e} above 100·tol")));
    }
    Ok(())
}

/// Evolves `Ψ0(0,0)` (or the identity when `full`) along `legs`.
pub fn run_path(sys: &FluxSystem, legs: Vec<Leg>, full: bool, opts: &IntegratorOptions) -> Result<LoopEvolution> {
    let psi0 = sys.ground(&Flux::default())?.state;
    let y0 = if full { sys.identity() } else { psi0.clone() };
    let (y, report) = sys.evolve(&legs, &y0, opts)?;
    let defect = unitarity_defect(&y);
    check_unitarity(defect, opts)?;
    let (unitary, final_state) = if full { (Some(y.clone()), matmul(&y, &psi0)) } else { (None, y) };
    let overlap = sys.overlap(&psi0, &final_state);
    Ok(LoopEvolution { legs, unitary, final_state, overlap, report, unitarity_defect: defect })
}

/// `U_X` or `U_Y` from `start` over `length`, applied to `Ψ0` (or the identity when `full`).
pub fn evolve_flux(
    sys: &FluxSystem,
    axis: Axis,
    start: (f64, f64),
    length: f64,
    full: bool,
    opts: &IntegratorOptions,
) -> Result<LoopEvolution> {
    run_path(sys, vec![axis_leg(axis, start, length)], full, opts)
}

/// `Ψ⟲(θx, θy, r)` and its overlap with `Ψ0`.
pub fn loop_state(sys: &FluxSystem, base: (f64, f64), r: f64, opts: &IntegratorOptions) -> Result<LoopEvolution> {
    if r.is_nan() || r <= 0.0 {
        return Err(HallError::Validation(format!("loop side must be positive, got {r}")));
    }
    run_path(sys, based_loop_legs(base, r), false, opts)
}

/// Basepoint of the `k`-th small loop (1-based) of an `N × N` Stokes grid:
/// `k = (N − m) + nN`, so `k = 1` is the rightmost square of the bottom row.
pub fn stokes_basepoint(k: usize, n: usize) -> (usize, usize) {
    let row = (k - 1) / n;
    let m = n - 1 - (k - 1) % n;
    (m, row)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StokesMode {
    /// Apply every factor to `Ψ0` only.
    State,
    /// Accumulate full unitaries and compare operators.
    Unitary,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StokesTable {
    pub n: usize,
    pub r: f64,
    pub mode: StokesMode,
    /// `p_k = ⟨Ψ0|U_k Ψ0⟩`, `k = 1..N²`.
    pub p: Vec<Complex64>,
    /// Origin square `p_N`.
    pub p_n: Complex64,
    /// `p_[1,N²] = ⟨Ψ0|U_{N²}···U_1 Ψ0⟩`.
    pub p_product: Complex64,
    /// `⟨Ψ0|V⟲(0,0,2π) Ψ0⟩`.
    pub big_loop: Complex64,
    /// `sup_k |p_k − p_N|`.
    pub delta: f64,
    /// `‖V⟲(0,0,2π) − ∏U_k‖` (unitary mode only).
    pub product_residual: Option<f64>,
    /// Largest entry of `V⟲(0,0,2π) − ∏U_k`, comparable with the integrator tolerance.
    pub product_residual_entry: Option<f64>,
    /// `‖V⟲(0,0,2π)Ψ0 − ∏U_k Ψ0‖`.
    pub state_residual: f64,
}

/// Builds the `N²` small-loop factors of the big loop and checks the product identity.
pub fn stokes_product(sys: &FluxSystem, n: usize, mode: StokesMode, opts: &IntegratorOptions) -> Result<StokesTable> {
    if n == 0 {
        return Err(HallError::Validation("Stokes grid needs N >= 1".into()));
    }
    if mode == StokesMode::Unitary && sys.dim() > DENSE_THRESHOLD {
        return Err(HallError::Validation(format!(
            "full-unitary Stokes mode needs dimension <= {DENSE_THRESHOLD}, got {}",
            sys.dim()
        )));
    }
    let r = 2.0 * PI / n as f64;
    let full = mode == StokesMode::Unitary;
    let psi0 = sys.ground(&Flux::default())?.state;
    let factor_legs = |k: usize| {
        let (m, row) = stokes_basepoint(k, n);
        based_loop_legs((m as f64 * r, row as f64 * r), r)
    };
    let big = run_path(sys, loop_legs((0.0, 0.0), 2.0 * PI), full, opts)?;
    let (p, product_state, product_residual, product_residual_entry) = if full {
        let cache = SegmentCache::build(sys, n, opts)?;
        let units: Vec<CMat> = (1..=n * n).map(|k| cache.compose(&factor_legs(k))).collect();
        let p = units.iter().map(|u| sys.overlap(&psi0, &matmul(u, &psi0))).collect();
        let mut prod = sys.identity();
        for u in &units {
            prod = matmul(u, &prod);
        }
        let diff = big.unitary.as_ref().expect("unitary mode") - &prod;
        (p, matmul(&prod, &psi0), Some(op_norm(&diff)), Some(max_abs(&diff)))
    } else {
        let p = (1..=n * n)
            .into_par_iter()
            .map(|k| run_path(sys, factor_legs(k), false, opts).map(|f| f.overlap))
            .collect::<Result<Vec<_>>>()?;
        let mut y = psi0.clone();
        for k in 1..=n * n {
            y = sys.evolve(&factor_legs(k), &y, opts)?.0;
        }
        (p, y, None, None)
    };
    let p_n = p[n - 1];
    let delta = p.iter().map(|pk| (pk - p_n).norm()).fold(0.0, f64::max);
    let p_product = sys.overlap(&psi0, &product_state);
    let state_residual = sys.distance(&big.final_state, &product_state);
    Ok(StokesTable { n, r, mode, p, p_n, p_product, big_loop: big.overlap, delta, product_residual, product_residual_entry, state_residual })
}

/// Unitaries of the elementary grid segments `(i r, j r) → +r` along each axis,
/// integrated once and composed into every Stokes factor.
struct SegmentCache {
    n: usize,
    r: f64,
    x: Vec<CMat>,
    y: Vec<CMat>,
}

impl SegmentCache {
    fn build(sys: &FluxSystem, n: usize, opts: &IntegratorOptions) -> Result<Self> {
        let r = 2.0 * PI / n as f64;
        let id = sys.identity();
        let seg = |axis: Axis, i: usize, j: usize| -> Result<CMat> {
            let leg = axis_leg(axis, (i as f64 * r, j as f64 * r), r);
            let (u, _) = sys.evolve(&[leg], &id, opts)?;
            check_unitarity(unitarity_defect(&u), opts)?;
            Ok(u)
        };
        // x segments live on rows j = 0..=n, y segments on columns i = 0..=n
        let x = (0..n * (n + 1)).into_par_iter().map(|k| seg(Axis::X, k % n, k / n)).collect::<Result<_>>()?;
        let y = (0..n * (n + 1)).into_par_iter().map(|k| seg(Axis::Y, k / n, k % n)).collect::<Result<_>>()?;
        Ok(SegmentCache { n, r, x, y })
    }

    fn segment(&self, axis: Axis, i: usize, j: usize) -> &CMat {
        match axis {
            Axis::X => &self.x[j * self.n + i],
            Axis::Y => &self.y[i * self.n + j],
        }
    }

    /// Product of the grid legs, latest leg leftmost.
    fn compose(&self, legs: &[Leg]) -> CMat {
        let snap = |v: f64| (v / self.r).round() as i64;
        let mut u = CMat::identity(self.x[0].nrows(), self.x[0].ncols());
        for leg in legs {
            let axis = if leg.dir.theta_x != 0.0 { Axis::X } else { Axis::Y };
            let (i0, j0, steps) = (snap(leg.start.theta_x), snap(leg.start.theta_y), snap(leg.length));
            for t in 0..steps.abs() {
                let along = if steps > 0 { t } else { -t - 1 };
                let (i, j) = match axis {
                    Axis::X => (i0 + along, j0),
                    Axis::Y => (i0, j0 + along),
                };
                let s = self.segment(axis, i as usize, j as usize);
                u = if steps > 0 { matmul(s, &u) } else { matmul_adj(s, &u) };
            }
        }
        u
    }
}

/// Both sides of the small-loop bookkeeping inequality.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OverlapBound {
    /// `|p_[1,N²] − p_N^{N²}|`.
    pub left: f64,
    /// `4π²(√(2δ r⁻⁴) + e^{4π²δ r⁻²} δ r⁻²)`.
    pub right: f64,
    pub slack: f64,
    pub holds: bool,
    pub max_modulus: f64,
}

pub fn overlap_table_bound(t: &StokesTable) -> OverlapBound {
    let nn = (t.n * t.n) as i32;
    let left = (t.p_product - t.p_n.powi(nn)).norm();
    let (d, r) = (t.delta, t.r);
    let four_pi2 = 4.0 * PI * PI;
    let right = if d == 0.0 {
        0.0
    } else {
        four_pi2 * ((2.0 * d / r.powi(4)).sqrt() + (four_pi2 * d / (r * r)).exp() * d / (r * r))
    };
    let max_modulus = t.p.iter().map(|p| p.norm()).fold(0.0, f64::max);
    OverlapBound { left, right, slack: right - left, holds: left <= right + 1e-12, max_modulus }
}
