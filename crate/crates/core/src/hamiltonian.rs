//! Finite-range charge-conserving interactions and the flux-twisted family
//! `H(θx, φx, θy, φy)`.
//!
//! Each term `Φ(Z)` is twisted by conjugation with the charge of the
//! counting half, `R_X(α, A) = e^{iαQ_X} A e^{−iαQ_X}`, where the angle is
//! chosen by the strip rules: terms touching column 1 get `θx`, terms
//! touching column `h + 1` get `−φx`, all others are left alone (first
//! matching rule wins). The y rules are the same with rows.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HallError, Result};
use crate::fock::{LocalSpace, ModeLayout, Sector, SectorAssembler, Statistics};
use crate::lattice::{Axis, Cut, Region, TorusLattice};
use crate::linalg::{max_abs, op_norm, CMat, SparseOp, I, ZERO};

/// Point of the four-parameter flux family `(θx, φx, θy, φy)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Flux {
    pub theta_x: f64,
    pub phi_x: f64,
    pub theta_y: f64,
    pub phi_y: f64,
}

impl Flux {
    pub fn new(theta_x: f64, phi_x: f64, theta_y: f64, phi_y: f64) -> Self {
        Flux { theta_x, phi_x, theta_y, phi_y }
    }

    /// `H(θx, θy) = H(θx, 0, θy, 0)`.
    pub fn xy(theta_x: f64, theta_y: f64) -> Self {
        Flux::new(theta_x, 0.0, theta_y, 0.0)
    }

    pub fn unit_x() -> Self {
        Flux::xy(1.0, 0.0)
    }

    pub fn unit_y() -> Self {
        Flux::xy(0.0, 1.0)
    }

    pub fn offset(&self, dir: &Flux, t: f64) -> Flux {
        Flux::new(
            self.theta_x + t * dir.theta_x,
            self.phi_x + t * dir.phi_x,
            self.theta_y + t * dir.theta_y,
            self.phi_y + t * dir.phi_y,
        )
    }
}

/// Which twist a term receives along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TwistRule {
    /// Touches coordinate 1: conjugated by `θ`.
    Theta,
    /// Touches coordinate `h + 1`: conjugated by `−φ`.
    AntiPhi,
    /// Left unchanged.
    Plain,
}

/// Local Hermitian term `Φ(Z)` acting on the listed modes of its support.
#[derive(Clone, Debug)]
pub struct Term {
    pub sites: Vec<usize>,
    pub modes: Vec<usize>,
    pub op: CMat,
}

impl Term {
    /// Term on `sites` acting on all the given modes (sorted on entry).
    pub fn new(mut sites: Vec<usize>, mut modes: Vec<usize>, op: CMat) -> Self {
        sites.sort_unstable();
        sites.dedup();
        modes.sort_unstable();
        modes.dedup();
        Term { sites, modes, op }
    }

    pub fn region(&self) -> Region {
        Region::new(self.sites.clone())
    }

    pub fn norm(&self) -> f64 {
        op_norm(&self.op)
    }
}

#[derive(Clone, Debug)]
struct TermGeometry {
    rule_x: TwistRule,
    rule_y: TwistRule,
    slots_x: usize,
    slots_y: usize,
}

/// Validated interaction on a torus together with its charge sector.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    id: String,
    lattice: TorusLattice,
    layout: ModeLayout,
    range: usize,
    k_max: usize,
    charge: usize,
    terms: Vec<Term>,
    geometry: Vec<TermGeometry>,
}

/// Single-particle form `H = Σ h_ij c†_i c_j + c`.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub h: CMat,
    pub constant: f64,
}

fn literal_rule(lat: &TorusLattice, sites: &[usize], axis: Axis, range: usize) -> TwistRule {
    let h = lat.half(axis) as i64;
    let r = range as i64;
    let near = |target: i64| sites.iter().any(|&s| (lat.coord(s, axis) as i64 - target).abs() < r);
    if near(1) {
        TwistRule::Theta
    } else if near(h + 1) {
        TwistRule::AntiPhi
    } else {
        TwistRule::Plain
    }
}

impl ModelSpec {
    /// Validates the interaction and precomputes the twist rule of every term.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: impl Into<String>,
        lattice: TorusLattice,
        layout: ModeLayout,
        range: usize,
        k_max: usize,
        charge: usize,
        terms: Vec<Term>,
    ) -> Result<Self> {
        if layout.n_sites != lattice.n_sites() {
            return Err(HallError::Validation("mode layout does not match lattice".into()));
        }
        if range == 0 {
            return Err(HallError::Validation("interaction range R must be >= 1".into()));
        }
        if charge > layout.n_modes() {
            return Err(HallError::Validation("charge exceeds number of modes".into()));
        }
        let mut geometry = Vec::with_capacity(terms.len());
        for (n, t) in terms.iter().enumerate() {
            geometry.push(Self::check_term(n, t, &lattice, &layout, range, k_max)?);
        }
        Ok(ModelSpec { id: id.into(), lattice, layout, range, k_max, charge, terms, geometry })
    }

    fn check_term(
        n: usize,
        t: &Term,
        lat: &TorusLattice,
        layout: &ModeLayout,
        range: usize,
        k_max: usize,
    ) -> Result<TermGeometry> {
        let err = |m: String| Err(HallError::Validation(format!("term {n}: {m}")));
        if t.sites.is_empty() {
            return err("empty support".into());
        }
        if t.sites.len() > k_max {
            return err(format!("support size {} exceeds k_max {k_max}", t.sites.len()));
        }
        if t.sites.iter().any(|&s| s >= lat.n_sites()) {
            return err("site out of range".into());
        }
        if t.modes.iter().any(|&m| !t.sites.contains(&layout.site_of(m))) {
            return err("mode outside the term support".into());
        }
        let d = 1usize << t.modes.len();
        if t.op.nrows() != d || t.op.ncols() != d {
            return err(format!("operator must be {d}x{d}"));
        }
        let herm = max_abs(&(&t.op - t.op.adjoint()));
        if herm > 1e-12 {
            return err(format!("not Hermitian (defect {herm:.3e})"));
        }
        for a in 0..d {
            for b in 0..d {
                if t.op[(a, b)].norm() > 1e-14 && a.count_ones() != b.count_ones() {
                    return err("does not conserve charge".into());
                }
            }
        }
        let region = t.region();
        if lat.covering_radius(&region) > range {
            return err(format!("support not contained in a ball of radius {range}"));
        }
        let ls = LocalSpace::new(t.modes.clone(), layout.statistics);
        let slots_x = ls.slot_mask(|m| lat.in_half(layout.site_of(m), Axis::X));
        let slots_y = ls.slot_mask(|m| lat.in_half(layout.site_of(m), Axis::Y));
        let rule_x = literal_rule(lat, &t.sites, Axis::X, range);
        let rule_y = literal_rule(lat, &t.sites, Axis::Y, range);
        for (axis, rule, slots) in [(Axis::X, rule_x, slots_x), (Axis::Y, rule_y, slots_y)] {
            let moves_charge = (0..d).any(|a| {
                (0..d).any(|b| {
                    t.op[(a, b)].norm() > 1e-14
                        && LocalSpace::count(a, slots) != LocalSpace::count(b, slots)
                })
            });
            if !moves_charge {
                continue;
            }
            let cuts = lat.crossed_cuts(&t.sites, axis);
            let expected = match cuts.as_slice() {
                [Cut::Origin] => TwistRule::Theta,
                [Cut::Middle] => TwistRule::AntiPhi,
                _ => {
                    return err(format!(
                        "moves charge across both {axis:?} cuts; torus too small for range {range}"
                    ))
                }
            };
            if rule != expected {
                return err(format!(
                    "strip rule {rule:?} along {axis:?} disagrees with the crossed cut {expected:?}; torus too small for range {range}"
                ));
            }
        }
        Ok(TermGeometry { rule_x, rule_y, slots_x, slots_y })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn range(&self) -> usize {
        self.range
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn charge(&self) -> usize {
        self.charge
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn rules(&self, n: usize) -> (TwistRule, TwistRule) {
        (self.geometry[n].rule_x, self.geometry[n].rule_y)
    }

    /// Same interaction in a different charge sector.
    pub fn with_charge(&self, charge: usize) -> Result<Self> {
        if charge > self.layout.n_modes() {
            return Err(HallError::Validation("charge exceeds number of modes".into()));
        }
        let mut s = self.clone();
        s.charge = charge;
        Ok(s)
    }

    pub fn sector(&self) -> Result<Sector> {
        Sector::new(self.layout, self.charge)
    }

    /// `Q_max = R · k_max · q_max`.
    pub fn q_max_bound(&self) -> f64 {
        (self.range * self.k_max * self.layout.q_max()) as f64
    }

    /// `J = sup_s Σ_{Z∋s} ‖Φ(Z)‖`.
    pub fn j_max(&self) -> f64 {
        site_strengths(self.lattice.n_sites(), &self.terms).into_iter().fold(0.0, f64::max)
    }

    /// Angles `(αx, αy)` conjugating term `n` at `flux`.
    fn angles(&self, n: usize, flux: &Flux) -> (f64, f64) {
        let g = &self.geometry[n];
        let ax = match g.rule_x {
            TwistRule::Theta => flux.theta_x,
            TwistRule::AntiPhi => -flux.phi_x,
            TwistRule::Plain => 0.0,
        };
        let ay = match g.rule_y {
            TwistRule::Theta => flux.theta_y,
            TwistRule::AntiPhi => -flux.phi_y,
            TwistRule::Plain => 0.0,
        };
        (ax, ay)
    }

    /// Local matrix of term `n` with entry `(a, b)` multiplied by `f(Δq_X, Δq_Y)`.
    fn map_term(&self, n: usize, f: impl Fn(i64, i64) -> Complex64) -> CMat {
        let g = &self.geometry[n];
        let op = &self.terms[n].op;
        let d = op.nrows();
        DMatrix::from_fn(d, d, |a, b| {
            let v = op[(a, b)];
            if v == ZERO {
                return ZERO;
            }
            let dx = LocalSpace::count(a, g.slots_x) - LocalSpace::count(b, g.slots_x);
            let dy = LocalSpace::count(a, g.slots_y) - LocalSpace::count(b, g.slots_y);
            v * f(dx, dy)
        })
    }

    /// Twisted term `R_X(αx, R_Y(αy, Φ(Z)))`.
    pub fn twisted_term(&self, n: usize, flux: &Flux) -> CMat {
        let (ax, ay) = self.angles(n, flux);
        if ax == 0.0 && ay == 0.0 {
            return self.terms[n].op.clone();
        }
        self.map_term(n, |dx, dy| Complex64::from_polar(1.0, ax * dx as f64 + ay * dy as f64))
    }

    /// Rates `(dαx/dt, dαy/dt)` of term `n` along the flux direction `dir`.
    fn angle_rates(&self, n: usize, dir: &Flux) -> (f64, f64) {
        let g = &self.geometry[n];
        let rx = match g.rule_x {
            TwistRule::Theta => dir.theta_x,
            TwistRule::AntiPhi => -dir.phi_x,
            TwistRule::Plain => 0.0,
        };
        let ry = match g.rule_y {
            TwistRule::Theta => dir.theta_y,
            TwistRule::AntiPhi => -dir.phi_y,
            TwistRule::Plain => 0.0,
        };
        (rx, ry)
    }

    /// `order`-th directional derivative of the twisted term along `dir`:
    /// `(i(ṙx Δq_X + ṙy Δq_Y))^order` times the twisted entry.
    pub fn derivative_term(&self, n: usize, flux: &Flux, dir: &Flux, order: u32) -> Option<CMat> {
        let (rx, ry) = self.angle_rates(n, dir);
        if rx == 0.0 && ry == 0.0 {
            return None;
        }
        let (ax, ay) = self.angles(n, flux);
        let m = self.map_term(n, |dx, dy| {
            let ph = Complex64::from_polar(1.0, ax * dx as f64 + ay * dy as f64);
            let k = I * (rx * dx as f64 + ry * dy as f64);
            ph * k.powu(order)
        });
        (max_abs(&m) > 0.0).then_some(m)
    }

    /// Indices of terms with support inside `region`.
    pub fn terms_inside(&self, region: &Region) -> Vec<usize> {
        (0..self.terms.len()).filter(|&n| self.terms[n].region().is_subset_of(region)).collect()
    }

    fn assemble(&self, sector: &Sector, mats: impl Iterator<Item = (usize, CMat)>) -> Result<SparseOp> {
        let mut asm = SectorAssembler::new(sector);
        for (n, m) in mats {
            asm.add(&self.terms[n].modes, &m)?;
        }
        Ok(asm.finish())
    }

    /// Sector matrix of `H(flux)`.
    pub fn hamiltonian(&self, sector: &Sector, flux: &Flux) -> Result<SparseOp> {
        self.assemble(sector, (0..self.terms.len()).map(|n| (n, self.twisted_term(n, flux))))
    }

    /// Sector matrix of the terms `idx` only, twisted at `flux`.
    pub fn partial_hamiltonian(&self, sector: &Sector, flux: &Flux, idx: &[usize]) -> Result<SparseOp> {
        self.assemble(sector, idx.iter().map(|&n| (n, self.twisted_term(n, flux))))
    }

    /// Sector matrix of `(dir · ∇)^order H` at `flux`.
    pub fn derivative(&self, sector: &Sector, flux: &Flux, dir: &Flux, order: u32) -> Result<SparseOp> {
        self.assemble(
            sector,
            (0..self.terms.len()).filter_map(|n| self.derivative_term(n, flux, dir, order).map(|m| (n, m))),
        )
    }

    /// Term indices with a nonzero derivative along `dir`.
    pub fn twisted_term_indices(&self, dir: &Flux) -> Vec<usize> {
        (0..self.terms.len())
            .filter(|&n| self.derivative_term(n, &Flux::default(), dir, 1).is_some())
            .collect()
    }

    /// Single-particle form of local matrices; fails if any is not bilinear.
    pub fn quadratic_form(&self, mats: &[(usize, CMat)]) -> Result<Quadratic> {
        if self.layout.statistics != Statistics::Fermion {
            return Err(HallError::Validation("quadratic form needs fermionic modes".into()));
        }
        let nm = self.layout.n_modes();
        let mut h = CMat::zeros(nm, nm);
        let mut constant = 0.0;
        for (n, m) in mats {
            let modes = &self.terms[*n].modes;
            let ls = LocalSpace::new(modes.clone(), Statistics::Fermion);
            let c0 = m[(0, 0)];
            let k = modes.len();
            let mut rebuilt = ls.identity() * c0;
            for a in 0..k {
                for b in 0..k {
                    let mut v = m[(1 << a, 1 << b)];
                    if a == b {
                        v -= c0;
                    }
                    if v != ZERO {
                        h[(modes[a], modes[b])] += v;
                        rebuilt += ls.creator(modes[a]) * ls.annihilator(modes[b]) * v;
                    }
                }
            }
            if max_abs(&(&rebuilt - m)) > 1e-12 {
                return Err(HallError::Validation(format!("term {n} is not quadratic")));
            }
            constant += c0.re;
        }
        Ok(Quadratic { h, constant })
    }

    /// Single-particle `H(flux)`.
    pub fn quadratic_hamiltonian(&self, flux: &Flux) -> Result<Quadratic> {
        let mats: Vec<_> = (0..self.terms.len()).map(|n| (n, self.twisted_term(n, flux))).collect();
        self.quadratic_form(&mats)
    }

    /// Single-particle `(dir · ∇)^order H(flux)`.
    pub fn quadratic_derivative(&self, flux: &Flux, dir: &Flux, order: u32) -> Result<Quadratic> {
        let mats: Vec<_> = (0..self.terms.len())
            .filter_map(|n| self.derivative_term(n, flux, dir, order).map(|m| (n, m)))
            .collect();
        self.quadratic_form(&mats)
    }

    /// Whether every term is bilinear in fermion operators.
    pub fn is_quadratic(&self) -> bool {
        self.quadratic_hamiltonian(&Flux::default()).is_ok()
    }
}

fn site_strengths(n_sites: usize, terms: &[Term]) -> Vec<f64> {
    let mut sums = vec![0.0; n_sites];
    for t in terms {
        let norm = t.norm();
        for &s in &t.sites {
            if s < n_sites {
                sums[s] += norm;
            }
        }
    }
    sums
}

/// Assumption audit of a raw term list.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub strength: f64,
    pub j_bound: f64,
    pub max_diameter: usize,
    pub range: usize,
    pub max_body: usize,
    pub k_max: usize,
    pub hermiticity_residual: f64,
    pub charge_residual: f64,
    /// Every term is built from an even number of fermion operators.
    pub parity_ok: bool,
    pub violations: Vec<String>,
    pub pass: bool,
}

/// Checks strength, range, body count, Hermiticity, charge conservation and
/// parity of `terms`, reporting instead of failing.
pub fn validate_terms(
    lattice: &TorusLattice,
    layout: &ModeLayout,
    range: usize,
    k_max: usize,
    j_bound: f64,
    terms: &[Term],
) -> ValidationReport {
    const TOL: f64 = 1e-12;
    let mut violations = Vec::new();
    let strength = site_strengths(lattice.n_sites(), terms).into_iter().fold(0.0, f64::max);
    if strength > j_bound + TOL {
        violations.push(format!("site strength {strength} exceeds J = {j_bound}"));
    }
    let (mut max_diameter, mut max_body) = (0, 0);
    let (mut herm, mut charge) = (0.0f64, 0.0f64);
    let mut parity_ok = true;
    for (n, t) in terms.iter().enumerate() {
        if t.sites.iter().any(|&s| s >= lattice.n_sites()) {
            violations.push(format!("term {n}: site out of range"));
            continue;
        }
        let d = lattice.diameter(&t.region());
        max_diameter = max_diameter.max(d);
        max_body = max_body.max(t.sites.len());
        if d > range {
            violations.push(format!("term {n}: diameter {d} exceeds R = {range}"));
        }
        if t.sites.len() > k_max {
            violations.push(format!("term {n}: {} sites exceed k_max = {k_max}", t.sites.len()));
        }
        herm = herm.max(op_norm(&(&t.op - t.op.adjoint())));
        // [Q_Z, Φ]_ab = (q_a − q_b) Φ_ab
        let q = CMat::from_diagonal(&nalgebra::DVector::from_fn(t.op.nrows(), |a, _| {
            Complex64::new(a.count_ones() as f64, 0.0)
        }));
        charge = charge.max(op_norm(&(&q * &t.op - &t.op * &q)));
        if layout.statistics == Statistics::Fermion {
            let odd = (0..t.op.nrows()).any(|a| {
                (0..t.op.ncols()).any(|b| t.op[(a, b)].norm() > TOL && (a.count_ones() + b.count_ones()) % 2 == 1)
            });
            parity_ok &= !odd;
        }
    }
    if herm > TOL {
        violations.push(format!("Hermiticity residual {herm:.3e}"));
    }
    if charge > TOL {
        violations.push(format!("charge residual {charge:.3e}"));
    }
    if !parity_ok {
        violations.push("odd fermion parity term".into());
    }
    let pass = violations.is_empty();
    ValidationReport {
        strength,
        j_bound,
        max_diameter,
        range,
        max_body,
        k_max,
        hermiticity_residual: herm,
        charge_residual: charge,
        parity_ok,
        violations,
        pass,
    }
}

impl ModelSpec {
    /// Audit of the validated spec against its own constants.
    pub fn validation_report(&self) -> ValidationReport {
        validate_terms(&self.lattice, &self.layout, self.range, self.k_max, self.j_max(), &self.terms)
    }
}

/// Charge-averaged term `(1/2π)∫ e^{iθQ_Z} Φ e^{−iθQ_Z} dθ`: keeps the
/// entries that conserve the charge of the support.
pub fn symmetrize(op: &CMat) -> CMat {
    let d = op.nrows();
    DMatrix::from_fn(d, d, |a, b| if a.count_ones() == b.count_ones() { op[(a, b)] } else { ZERO })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::Statistics;

    fn ring_hopping(l: usize) -> ModelSpec {
        let lat = TorusLattice::chain(l).unwrap();
        let layout = ModeLayout { n_sites: l, orbitals: 1, statistics: Statistics::HardcoreBoson };
        let mut terms = Vec::new();
        for x in 0..l {
            let y = (x + 1) % l;
            let ls = LocalSpace::new(vec![x, y], Statistics::HardcoreBoson);
            let op = ls.hopping(y, x, Complex64::new(-1.0, 0.0));
            terms.push(Term::new(vec![x, y], ls.modes().to_vec(), op));
        }
        ModelSpec::new("ring", lat, layout, 1, 2, 1, terms).unwrap()
    }

    #[test]
    fn test_ring_twist_shifts_momenta() {
        let spec = ring_hopping(5);
        let sec = spec.sector().unwrap();
        let theta = 0.7;
        let h = spec.hamiltonian(&sec, &Flux::xy(theta, 0.0)).unwrap().to_dense();
        let (e, _) = crate::linalg::eigh(&h);
        let mut expect: Vec<f64> = (0..5)
            .map(|n| -2.0 * ((2.0 * std::f64::consts::PI * n as f64 + theta) / 5.0).cos())
            .collect();
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in e.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn test_rules_on_ring() {
        let spec = ring_hopping(5);
        // bond (5,1) touches x = 1
        assert_eq!(spec.rules(4).0, TwistRule::Theta);
        // bond (3,4) touches h + 1 = 4
        assert_eq!(spec.rules(2).0, TwistRule::AntiPhi);
        assert_eq!(spec.rules(1).0, TwistRule::Plain);
    }

    #[test]
    fn test_symmetrize_removes_charge_changing_entries() {
        let ls = LocalSpace::new(vec![0, 1], Statistics::HardcoreBoson);
        let op = ls.creator(0) + ls.annihilator(0) + ls.number(1);
        let s = symmetrize(&op);
        assert!(max_abs(&(s - ls.number(1))) < 1e-15);
    }
}
