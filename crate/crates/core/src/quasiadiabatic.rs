//! Quasi-adiabatic generator `S_Δ(H, A) = ∫ W(t) e^{iHt} A e^{−iHt} dt`,
//! its strip truncations, and adaptive integration of `∂_r U = i D U`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HallError, Result};
use crate::hamiltonian::{Flux, ModelSpec};
use crate::fock::Sector;
use crate::lattice::Region;
use crate::linalg::{conjugate, conjugate_adj, eigh, gauss_legendre, matmul, max_abs, polar_isometry, CMat, I};
use crate::spectral::DEGENERACY_TOL;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    /// `i/λ` outside the gap, cubic `i(2λ/Δ² − λ³/Δ⁴)` inside (C¹).
    Spline,
    /// `i(1 − e^{−λ²/2σ²})/λ` with `σ = Δ/ε_cal`.
    Gaussian,
}

/// Relative accuracy of the Gaussian filter outside the gap.
pub const GAUSSIAN_REL_ERROR: f64 = 1e-8;
/// `Δ ‖W‖₁` of the spline kernel (numerical quadrature of its Fourier inverse).
pub const K_SPLINE: f64 = 1.802;

/// Filter function `Ŵ` with gap parameter `Δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub kind: FilterKind,
    pub delta: f64,
}

impl Filter {
    pub fn new(kind: FilterKind, delta: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(HallError::Validation(format!("filter gap must be positive, got {delta}")));
        }
        Ok(Filter { kind, delta })
    }

    /// `ε_cal = sqrt(2 ln(1/err))`, so that `|λŴ(λ) − i| ≤ err` for `|λ| ≥ Δ`.
    pub fn eps_cal() -> f64 {
        (2.0 * (1.0 / GAUSSIAN_REL_ERROR).ln()).sqrt()
    }

    pub fn sigma(&self) -> f64 {
        self.delta / Self::eps_cal()
    }

    pub fn w_hat(&self, lambda: f64) -> Complex64 {
        let d = self.delta;
        match self.kind {
            FilterKind::Spline => {
                if lambda.abs() >= d {
                    I / lambda
                } else {
                    I * (2.0 * lambda / (d * d) - lambda.powi(3) / d.powi(4))
                }
            }
            FilterKind::Gaussian => {
                let s = self.sigma();
                let x = lambda * lambda / (2.0 * s * s);
                if x < 1e-8 {
                    // series of (1 − e^{−x})/λ
                    I * lambda / (2.0 * s * s) * (1.0 - x / 2.0)
                } else {
                    I * (-(-x).exp_m1()) / lambda
                }
            }
        }
    }

    /// `K = Δ ‖W‖₁`, so that `‖S_Δ(H, A)‖ ≤ (K/Δ) ‖A‖`.
    pub fn k_const(&self) -> f64 {
        match self.kind {
            FilterKind::Spline => K_SPLINE,
            FilterKind::Gaussian => (2.0 / std::f64::consts::PI).sqrt() * Self::eps_cal(),
        }
    }

    /// Time-domain kernel `W(t) = ½ sgn(t) erfc(σ|t|/√2)` (Gaussian kind only).
    pub fn time_kernel(&self, t: f64) -> Result<f64> {
        match self.kind {
            FilterKind::Gaussian => {
                let v = 0.5 * statrs::function::erf::erfc(self.sigma() * t.abs() / std::f64::consts::SQRT_2);
                Ok(if t < 0.0 { -v } else { v })
            }
            FilterKind::Spline => Err(HallError::Validation("time kernel only available for the gaussian filter".into())),
        }
    }
}

/// `D = V (Ŵ(E_m − E_n) · (V†AV)_mn) V†` from an eigendecomposition of `H`.
pub fn generator_from_eigen(energies: &DVector<f64>, vecs: &CMat, a: &CMat, filter: &Filter) -> CMat {
    let n = energies.len();
    let mut ab = conjugate_adj(vecs, a);
    for m in 0..n {
        for k in 0..n {
            let w = filter.w_hat(energies[m] - energies[k]);
            ab[(m, k)] *= w;
        }
    }
    conjugate(vecs, &ab)
}

/// `S_Δ(H, A)` for dense Hermitian `H`.
pub fn generator(h: &CMat, a: &CMat, filter: &Filter) -> CMat {
    let (e, v) = eigh(h);
    generator_from_eigen(&e, &v, a, filter)
}

/// `S_Δ(H, A)` by composite Gauss–Legendre quadrature of the time integral
/// (Gaussian kernel), for cross-validation of the spectral formula.
pub fn generator_time_quadrature(h: &CMat, a: &CMat, filter: &Filter, panels_per_unit: f64) -> Result<CMat> {
    let (e, v) = eigh(h);
    let n = e.len();
    let spread = e[n - 1] - e[0];
    let t_max = 9.0 * std::f64::consts::SQRT_2 / filter.sigma();
    let panels = ((t_max * (spread.max(1.0)) * panels_per_unit).ceil() as usize).max(8);
    let (x, w) = gauss_legendre(10);
    let width = t_max / panels as f64;
    let mut nodes = Vec::with_capacity(panels * x.len());
    for p in 0..panels {
        let a0 = p as f64 * width;
        for (xi, wi) in x.iter().zip(&w) {
            let t = a0 + 0.5 * width * (xi + 1.0);
            nodes.push((t, 0.5 * width * wi * filter.time_kernel(t)?));
        }
    }
    let mut ab = v.adjoint() * a * &v;
    for m in 0..n {
        for k in 0..n {
            let om = e[m] - e[k];
            // ∫ W(t) e^{iωt} dt = 2i ∫_0^∞ W(t) sin(ωt) dt
            let s: f64 = nodes.iter().map(|(t, wt)| wt * (om * t).sin()).sum();
            ab[(m, k)] *= I * 2.0 * s;
        }
    }
    Ok(&v * ab * v.adjoint())
}

/// Quantities reported by every generator evaluation.
#[derive(Clone, Copy, Debug)]
pub struct FieldSample {
    /// Spectral gap above the ground state at the sampled flux.
    pub gap: f64,
}

/// Flux-dependent generator `D(flux)` acting on blocks of column vectors.
pub trait GeneratorField: Sync {
    /// Dimension of the space the columns live in.
    fn dim(&self) -> usize;

    /// Returns `i D(flux) Y` for the derivative direction `dir`.
    fn apply(&self, flux: &Flux, dir: &Flux, y: &CMat) -> Result<(CMat, FieldSample)>;
}

/// Exact many-body generator in the sector basis by dense diagonalization.
pub struct DenseField<'a> {
    pub spec: &'a ModelSpec,
    pub sector: &'a Sector,
    pub filter: Filter,
}

impl<'a> DenseField<'a> {
    pub fn new(spec: &'a ModelSpec, sector: &'a Sector, filter: Filter) -> Self {
        DenseField { spec, sector, filter }
    }

    /// Dense `D(flux)` along `dir`.
    pub fn generator(&self, flux: &Flux, dir: &Flux) -> Result<(CMat, FieldSample)> {
        let h = self.spec.hamiltonian(self.sector, flux)?.to_dense();
        let a = self.spec.derivative(self.sector, flux, dir, 1)?.to_dense();
        let (e, v) = eigh(&h);
        let gap = if e.len() > 1 { e[1] - e[0] } else { f64::INFINITY };
        Ok((generator_from_eigen(&e, &v, &a, &self.filter), FieldSample { gap }))
    }
}

impl GeneratorField for DenseField<'_> {
    fn dim(&self) -> usize {
        self.sector.dim()
    }

    fn apply(&self, flux: &Flux, dir: &Flux, y: &CMat) -> Result<(CMat, FieldSample)> {
        let (d, s) = self.generator(flux, dir)?;
        Ok((matmul(&d, y) * I, s))
    }
}

/// Truncated generator `Σ_Z S_Δ(H_{Z(M)}, ∂Φ(Z))`, each strip term evolved
/// only by the terms supported in its `M`-fattening.
pub struct TruncatedField<'a> {
    pub spec: &'a ModelSpec,
    pub sector: &'a Sector,
    pub filter: Filter,
    pub m: usize,
    /// Only terms inside this region contribute derivatives (whole lattice if `None`).
    pub source: Option<Region>,
}

impl TruncatedField<'_> {
    pub fn generator(&self, flux: &Flux, dir: &Flux) -> Result<CMat> {
        let lat = self.spec.lattice();
        let dim = self.sector.dim();
        let mut total = CMat::zeros(dim, dim);
        // group derivative terms by their fattened support
        let mut groups: Vec<(Region, Vec<usize>)> = Vec::new();
        for (n, t) in self.spec.terms().iter().enumerate() {
            if let Some(src) = &self.source {
                if !t.region().is_subset_of(src) {
                    continue;
                }
            }
            if self.spec.derivative_term(n, flux, dir, 1).is_none() {
                continue;
            }
            let fat = lat.fatten(&t.region(), self.m);
            match groups.iter_mut().find(|(r, _)| *r == fat) {
                Some((_, v)) => v.push(n),
                None => groups.push((fat, vec![n])),
            }
        }
        for (fat, idx) in groups {
            let inside = self.spec.terms_inside(&fat);
            let h = self.spec.partial_hamiltonian(self.sector, flux, &inside)?.to_dense();
            let mut asm = crate::fock::SectorAssembler::new(self.sector);
            for &n in &idx {
                let m = self.spec.derivative_term(n, flux, dir, 1).unwrap();
                asm.add(&self.spec.terms()[n].modes, &m)?;
            }
            let a = asm.finish().to_dense();
            total += generator(&h, &a, &self.filter);
        }
        Ok(total)
    }
}

impl GeneratorField for TruncatedField<'_> {
    fn dim(&self) -> usize {
        self.sector.dim()
    }

    fn apply(&self, flux: &Flux, dir: &Flux, y: &CMat) -> Result<(CMat, FieldSample)> {
        let d = self.generator(flux, dir)?;
        Ok((matmul(&d, y) * I, FieldSample { gap: f64::NAN }))
    }
}

/// Free-fermion generator: for bilinear `H` and `A` the many-body `S_Δ` is the
/// bilinear with single-particle matrix `Ŵ(ε_m − ε_n) a_mn`.
pub struct QuadraticField<'a> {
    pub spec: &'a ModelSpec,
    pub filter: Filter,
    pub particles: usize,
}

impl<'a> QuadraticField<'a> {
    pub fn new(spec: &'a ModelSpec, filter: Filter) -> Self {
        QuadraticField { spec, filter, particles: spec.charge() }
    }

    pub fn generator(&self, flux: &Flux, dir: &Flux) -> Result<(CMat, FieldSample)> {
        let h = self.spec.quadratic_hamiltonian(flux)?;
        let a = self.spec.quadratic_derivative(flux, dir, 1)?;
        let (e, v) = eigh(&h.h);
        let n = self.particles;
        let gap = if n == 0 || n == e.len() { f64::INFINITY } else { e[n] - e[n - 1] };
        Ok((generator_from_eigen(&e, &v, &a.h, &self.filter), FieldSample { gap }))
    }
}

impl GeneratorField for QuadraticField<'_> {
    fn dim(&self) -> usize {
        self.spec.layout().n_modes()
    }

    fn apply(&self, flux: &Flux, dir: &Flux, y: &CMat) -> Result<(CMat, FieldSample)> {
        let (d, s) = self.generator(flux, dir)?;
        Ok((matmul(&d, y) * I, s))
    }
}

/// Straight segment `flux(t) = start + t · dir`, `t ∈ [0, length]` (length may be negative).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub start: Flux,
    pub dir: Flux,
    pub length: f64,
}

impl Leg {
    pub fn new(start: Flux, dir: Flux, length: f64) -> Self {
        Leg { start, dir, length }
    }

    pub fn end(&self) -> Flux {
        self.start.offset(&self.dir, self.length)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IntegratorOptions {
    /// Entrywise error tolerance per unit of flux length.
    pub tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Project back onto isometries after each accepted step.
    pub reunitarize: bool,
}

impl IntegratorOptions {
    /// Defaults for state evolution.
    pub fn states() -> Self {
        IntegratorOptions { tol: 1e-9, initial_step: 0.02, max_step: 1.0, max_steps: 200_000, reunitarize: true }
    }

    /// Defaults for full-unitary evolution.
    pub fn unitaries() -> Self {
        IntegratorOptions { tol: 1e-8, ..Self::states() }
    }

    pub fn with_tol(self, tol: f64) -> Self {
        IntegratorOptions { tol, ..self }
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct LegReport {
    pub accepted: usize,
    pub rejected: usize,
    pub min_gap: f64,
}

impl LegReport {
    pub fn merge(&mut self, other: &LegReport) {
        self.accepted += other.accepted;
        self.rejected += other.rejected;
        self.min_gap = self.min_gap.min(other.min_gap);
    }

    pub fn empty() -> Self {
        LegReport { accepted: 0, rejected: 0, min_gap: f64::INFINITY }
    }
}

// Dormand–Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Integrates `dY/dt = i D(start + t·dir) Y` over the leg with adaptive
/// Dormand–Prince steps, projecting back to an isometry after each step.
pub fn evolve_leg(field: &dyn GeneratorField, leg: &Leg, y0: &CMat, opts: &IntegratorOptions) -> Result<(CMat, LegReport)> {
    let mut report = LegReport::empty();
    if leg.length == 0.0 {
        return Ok((y0.clone(), report));
    }
    if y0.nrows() != field.dim() {
        return Err(HallError::Validation(format!(
            "state has {} rows, generator acts on {}",
            y0.nrows(),
            field.dim()
        )));
    }
    let sgn = leg.length.signum();
    let total = leg.length.abs();
    let f = |t: f64, y: &CMat| -> Result<(CMat, FieldSample)> {
        let (k, s) = field.apply(&leg.start.offset(&leg.dir, sgn * t), &leg.dir, y)?;
        Ok((k * Complex64::new(sgn, 0.0), s))
    };
    let mut t = 0.0;
    let mut y = y0.clone();
    let mut h = opts.initial_step.min(total);
    let (mut k1, s0) = f(0.0, &y)?;
    report.min_gap = report.min_gap.min(s0.gap);
    while t < total {
        if report.accepted + report.rejected >= opts.max_steps {
            return Err(HallError::Numerical("integrator step budget exhausted".into()));
        }
        let last = t + h >= total * (1.0 - 1e-14);
        if last {
            h = total - t;
        }
        let mut k: Vec<CMat> = Vec::with_capacity(7);
        k.push(k1.clone());
        let mut min_gap = f64::INFINITY;
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[s][j] != 0.0 {
                    ys += kj * Complex64::new(h * A[s][j], 0.0);
                }
            }
            let (ks, smp) = f(t + C[s] * h, &ys)?;
            min_gap = min_gap.min(smp.gap);
            k.push(ks);
        }
        let mut y5 = y.clone();
        for (j, kj) in k.iter().enumerate().take(6) {
            if A[6][j] != 0.0 {
                y5 += kj * Complex64::new(h * A[6][j], 0.0);
            }
        }
        let mut err = CMat::zeros(y.nrows(), y.ncols());
        for (j, kj) in k.iter().enumerate() {
            let e = if j < 6 { A[6][j] } else { 0.0 } - B4[j];
            if e != 0.0 {
                err += kj * Complex64::new(h * e, 0.0);
            }
        }
        // error per unit step keeps the accumulated error near tol × length
        let err_norm = max_abs(&err) / (opts.tol * h.min(1.0));
        if err_norm <= 1.0 || h < 1e-12 {
            t = if last { total } else { t + h };
            let fsal = k.pop().unwrap();
            if opts.reunitarize {
                let yp = polar_isometry(&y5);
                let shift = max_abs(&(&yp - &y5));
                y = yp;
                // re-sample only when the projection moved the state noticeably
                k1 = if shift > 1e-3 * opts.tol { f(t, &y)?.0 } else { fsal };
            } else {
                y = y5;
                k1 = fsal;
            }
            report.accepted += 1;
            report.min_gap = report.min_gap.min(min_gap);
        } else {
            report.rejected += 1;
        }
        let factor = if err_norm == 0.0 { 5.0 } else { (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0) };
        h = (h * factor).min(opts.max_step);
    }
    Ok((y, report))
}

/// Evolves through consecutive legs, accumulating reports.
pub fn evolve_path(field: &dyn GeneratorField, legs: &[Leg], y0: &CMat, opts: &IntegratorOptions) -> Result<(CMat, LegReport)> {
    let mut y = y0.clone();
    let mut rep = LegReport::empty();
    for leg in legs {
        let (y2, r) = evolve_leg(field, leg, &y, opts)?;
        rep.merge(&r);
        y = y2;
    }
    Ok((y, rep))
}

/// Warns when a sampled gap falls below `Δ/4` (the gap floor).
pub fn gap_floor_violated(report: &LegReport, filter: &Filter) -> bool {
    report.min_gap < filter.delta / 4.0
}

/// Whether a gap is numerically zero.
pub fn is_degenerate(gap: f64) -> bool {
    gap < DEGENERACY_TOL
}
