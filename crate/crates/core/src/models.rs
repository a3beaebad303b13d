//! Built-in model zoo and the free-fermion oracle.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HallError, Result};
use crate::fock::{LocalSpace, ModeLayout, Statistics};
use crate::hamiltonian::{validate_terms, Flux, ModelSpec, Term, ValidationReport};
use crate::lattice::TorusLattice;
use crate::linalg::{eigh, CMat, ZERO};
use crate::spectral::slater_overlap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecipeName {
    /// Hardcore bosons with site-dependent chemical potentials, no hopping.
    TrivialProduct,
    /// Hardcore bosons hopping in a uniform magnetic field (Landau gauge).
    XyFluxBoson,
    /// Two-orbital Chern insulator at half filling.
    QwzFermion,
    /// `QwzFermion` plus nearest-neighbour density-density repulsion.
    QwzInteracting,
    /// Periodic hardcore-boson chain with staggered potential.
    BosonChain,
}

impl RecipeName {
    pub const ALL: [RecipeName; 5] = [
        RecipeName::TrivialProduct,
        RecipeName::XyFluxBoson,
        RecipeName::QwzFermion,
        RecipeName::QwzInteracting,
        RecipeName::BosonChain,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RecipeName::TrivialProduct => "trivial_product",
            RecipeName::XyFluxBoson => "xy_flux_boson",
            RecipeName::QwzFermion => "qwz_fermion",
            RecipeName::QwzInteracting => "qwz_interacting",
            RecipeName::BosonChain => "boson_chain",
        }
    }

    /// Documented default parameters.
    pub fn defaults(&self) -> BTreeMap<String, f64> {
        let p: &[(&str, f64)] = match self {
            RecipeName::TrivialProduct => &[("mu", 1.0), ("spread", 0.25)],
            RecipeName::XyFluxBoson => &[("t", 1.0), ("flux_quanta", 1.0), ("stagger", 0.5)],
            RecipeName::QwzFermion => &[("m", -0.25), ("t", 1.0)],
            RecipeName::QwzInteracting => &[("m", -0.25), ("t", 1.0), ("v", 0.1)],
            RecipeName::BosonChain => &[("t", 1.0), ("v", 0.5), ("stagger", 1.0)],
        };
        p.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    /// Default charge sector on an `l`-site-per-side lattice.
    pub fn default_charge(&self, n_sites: usize) -> usize {
        match self {
            RecipeName::TrivialProduct => 1,
            RecipeName::XyFluxBoson => (n_sites / 2).min(4),
            RecipeName::QwzFermion | RecipeName::QwzInteracting => n_sites,
            RecipeName::BosonChain => n_sites / 2,
        }
    }
}

impl std::str::FromStr for RecipeName {
    type Err = HallError;
    fn from_str(s: &str) -> Result<Self> {
        RecipeName::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| HallError::Validation(format!("unknown model recipe '{s}'")))
    }
}

/// Named recipe with parameter overrides and an optional charge sector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecipe {
    pub name: RecipeName,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub charge: Option<usize>,
}

impl ModelRecipe {
    pub fn new(name: RecipeName) -> Self {
        ModelRecipe { name, params: BTreeMap::new(), charge: None }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_charge(mut self, q: usize) -> Self {
        self.charge = Some(q);
        self
    }

    /// Parameter value, falling back to the recipe default.
    pub fn param(&self, key: &str) -> Result<f64> {
        if let Some(v) = self.params.get(key) {
            return Ok(*v);
        }
        self.name
            .defaults()
            .get(key)
            .copied()
            .ok_or_else(|| HallError::Validation(format!("{} has no parameter '{key}'", self.name.as_str())))
    }

    fn check_params(&self) -> Result<()> {
        let known = self.name.defaults();
        for (k, v) in &self.params {
            if !known.contains_key(k) {
                return Err(HallError::Validation(format!("{} has no parameter '{k}'", self.name.as_str())));
            }
            if !v.is_finite() {
                return Err(HallError::Validation(format!("parameter '{k}' must be finite")));
            }
        }
        Ok(())
    }

    /// Warnings for parameters near a known gap closing.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if matches!(self.name, RecipeName::QwzFermion | RecipeName::QwzInteracting) {
            if let Ok(m) = self.param("m") {
                for c in [-2.0, 0.0, 2.0] {
                    if (m - c).abs() < 0.05 {
                        out.push(format!("mass m={m} is within 0.05 of the bulk gap closing at {c}"));
                    }
                }
            }
        }
        out
    }
}

fn bond_term(ls: &LocalSpace, sites: Vec<usize>, op: CMat) -> Term {
    Term::new(sites, ls.modes().to_vec(), op)
}

fn trivial_product(recipe: &ModelRecipe, l: usize) -> Result<ModelSpec> {
    let lat = TorusLattice::square(l)?;
    let n = lat.n_sites();
    let layout = ModeLayout { n_sites: n, orbitals: 1, statistics: Statistics::HardcoreBoson };
    let (mu, spread) = (recipe.param("mu")?, recipe.param("spread")?);
    let terms = (0..n)
        .map(|s| {
            let ls = LocalSpace::new(vec![s], Statistics::HardcoreBoson);
            let op = ls.number(s) * Complex64::new(mu + spread * s as f64, 0.0);
            bond_term(&ls, vec![s], op)
        })
        .collect();
    let q = recipe.charge.unwrap_or(recipe.name.default_charge(n));
    ModelSpec::new("trivial_product", lat, layout, 1, 1, q, terms)
}

fn xy_flux_boson(recipe: &ModelRecipe, l: usize) -> Result<ModelSpec> {
    let lat = TorusLattice::square(l)?;
    let n = lat.n_sites();
    let layout = ModeLayout { n_sites: n, orbitals: 1, statistics: Statistics::HardcoreBoson };
    let t = recipe.param("t")?;
    let p = recipe.param("flux_quanta")?;
    let stagger = recipe.param("stagger")?;
    if p.fract() != 0.0 {
        return Err(HallError::Validation("flux_quanta must be an integer on a torus".into()));
    }
    let alpha = 2.0 * PI * p / (l * l) as f64;
    let mut terms = Vec::new();
    for y in 1..=l {
        for x in 1..=l {
            let s = lat.site(x, y);
            if stagger != 0.0 {
                let ls = LocalSpace::new(vec![s], Statistics::HardcoreBoson);
                let sign = if (x + y) % 2 == 0 { 1.0 } else { -1.0 };
                terms.push(bond_term(&ls, vec![s], ls.number(s) * Complex64::new(stagger * sign, 0.0)));
            }
            // Landau gauge: y-links carry α·x, the x-link across the seam carries −α·L·y
            let sx = lat.site_wrapped(x as i64 + 1, y as i64);
            let ax = if x == l { -alpha * (l * y) as f64 } else { 0.0 };
            let sy = lat.site_wrapped(x as i64, y as i64 + 1);
            let ay = alpha * x as f64;
            for (to, a) in [(sx, ax), (sy, ay)] {
                let ls = LocalSpace::new(vec![s, to], Statistics::HardcoreBoson);
                let op = ls.hopping(to, s, Complex64::from_polar(-t, a));
                terms.push(bond_term(&ls, vec![s, to], op));
            }
        }
    }
    let q = recipe.charge.unwrap_or(recipe.name.default_charge(n));
    ModelSpec::new("xy_flux_boson", lat, layout, 1, 2, q, terms)
}

fn pauli(k: usize) -> DMatrix<Complex64> {
    let (o, i) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0));
    match k {
        1 => DMatrix::from_row_slice(2, 2, &[ZERO, o, o, ZERO]),
        2 => DMatrix::from_row_slice(2, 2, &[ZERO, -i, i, ZERO]),
        _ => DMatrix::from_row_slice(2, 2, &[o, ZERO, ZERO, -o]),
    }
}

/// `Σ_ab c†_{to,a} T_ab c_{from,b} + h.c.` on the two-orbital sites.
fn orbital_hop(ls: &LocalSpace, layout: &ModeLayout, from: usize, to: usize, t: &CMat) -> CMat {
    let mut h = CMat::zeros(ls.dim(), ls.dim());
    for a in 0..2 {
        for b in 0..2 {
            if t[(a, b)] != ZERO {
                h += ls.creator(layout.mode(to, a)) * ls.annihilator(layout.mode(from, b)) * t[(a, b)];
            }
        }
    }
    &h + h.adjoint()
}

fn qwz(recipe: &ModelRecipe, l: usize, interacting: bool) -> Result<ModelSpec> {
    let lat = TorusLattice::square(l)?;
    let n = lat.n_sites();
    let layout = ModeLayout { n_sites: n, orbitals: 2, statistics: Statistics::Fermion };
    let (m, t) = (recipe.param("m")?, recipe.param("t")?);
    let v = if interacting { recipe.param("v")? } else { 0.0 };
    let half = Complex64::new(0.5, 0.0);
    let i_t = Complex64::new(0.0, -t);
    let tx = (pauli(3) + pauli(1) * i_t) * half;
    let ty = (pauli(3) + pauli(2) * i_t) * half;
    let mut terms = Vec::new();
    for y in 1..=l {
        for x in 1..=l {
            let s = lat.site(x, y);
            let ls = LocalSpace::new(layout.modes_of_sites(&[s]), Statistics::Fermion);
            let mass = (ls.number(layout.mode(s, 0)) - ls.number(layout.mode(s, 1))) * Complex64::new(m, 0.0);
            terms.push(bond_term(&ls, vec![s], mass));
            for (to, hop) in [(lat.site_wrapped(x as i64 + 1, y as i64), &tx), (lat.site_wrapped(x as i64, y as i64 + 1), &ty)] {
                let ls = LocalSpace::new(layout.modes_of_sites(&[s, to]), Statistics::Fermion);
                terms.push(bond_term(&ls, vec![s, to], orbital_hop(&ls, &layout, s, to, hop)));
                if v != 0.0 {
                    let ns = ls.number(layout.mode(s, 0)) + ls.number(layout.mode(s, 1));
                    let nt = ls.number(layout.mode(to, 0)) + ls.number(layout.mode(to, 1));
                    terms.push(bond_term(&ls, vec![s, to], ns * nt * Complex64::new(v, 0.0)));
                }
            }
        }
    }
    let q = recipe.charge.unwrap_or(recipe.name.default_charge(n));
    let id = if interacting { "qwz_interacting" } else { "qwz_fermion" };
    ModelSpec::new(id, lat, layout, 1, 2, q, terms)
}

fn boson_chain(recipe: &ModelRecipe, l: usize) -> Result<ModelSpec> {
    let lat = TorusLattice::chain(l)?;
    let layout = ModeLayout { n_sites: l, orbitals: 1, statistics: Statistics::HardcoreBoson };
    let (t, v, stagger) = (recipe.param("t")?, recipe.param("v")?, recipe.param("stagger")?);
    let mut terms = Vec::new();
    for x in 0..l {
        let y = (x + 1) % l;
        let ls = LocalSpace::new(vec![x, y], Statistics::HardcoreBoson);
        let mut op = ls.hopping(y, x, Complex64::new(-t, 0.0));
        if v != 0.0 {
            op += ls.number(x) * ls.number(y) * Complex64::new(v, 0.0);
        }
        terms.push(bond_term(&ls, vec![x, y], op));
        if stagger != 0.0 {
            let ls1 = LocalSpace::new(vec![x], Statistics::HardcoreBoson);
            let sign = if x % 2 == 0 { 1.0 } else { -1.0 };
            terms.push(bond_term(&ls1, vec![x], ls1.number(x) * Complex64::new(stagger * sign, 0.0)));
        }
    }
    let q = recipe.charge.unwrap_or(recipe.name.default_charge(l));
    ModelSpec::new("boson_chain", lat, layout, 1, 2, q, terms)
}

/// Builds and validates the recipe on an `l × l` torus (`l` sites for chains).
pub fn make_model(recipe: &ModelRecipe, l: usize) -> Result<ModelSpec> {
    recipe.check_params()?;
    match recipe.name {
        RecipeName::TrivialProduct => trivial_product(recipe, l),
        RecipeName::XyFluxBoson => xy_flux_boson(recipe, l),
        RecipeName::QwzFermion => qwz(recipe, l, false),
        RecipeName::QwzInteracting => qwz(recipe, l, true),
        RecipeName::BosonChain => boson_chain(recipe, l),
    }
}

/// One term of a model definition file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermEntry {
    /// Site indices, `s = (x − 1) + (y − 1) L`.
    pub sites: Vec<usize>,
    /// Modes acted on; all modes of `sites` when omitted.
    #[serde(default)]
    pub modes: Option<Vec<usize>>,
    /// Real part, row-major, `2^k × 2^k` for `k` modes.
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeShape {
    Square,
    Chain,
}

/// User-supplied interaction: lattice, site space, constants and dense terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub id: String,
    pub lattice: LatticeShape,
    #[serde(rename = "L")]
    pub l: usize,
    pub statistics: Statistics,
    #[serde(default = "one")]
    pub orbitals: usize,
    #[serde(rename = "R")]
    pub range: usize,
    pub k_max: usize,
    /// Site-strength bound `J`; the measured strength when omitted.
    #[serde(rename = "J", default)]
    pub j: Option<f64>,
    pub charge: usize,
    pub terms: Vec<TermEntry>,
}

fn one() -> usize {
    1
}

impl ModelFile {
    fn parts(&self) -> Result<(TorusLattice, ModeLayout, Vec<Term>)> {
        let lat = match self.lattice {
            LatticeShape::Square => TorusLattice::square(self.l)?,
            LatticeShape::Chain => TorusLattice::chain(self.l)?,
        };
        if self.orbitals == 0 {
            return Err(HallError::Validation("orbitals must be >= 1".into()));
        }
        let layout = ModeLayout { n_sites: lat.n_sites(), orbitals: self.orbitals, statistics: self.statistics };
        let mut terms = Vec::with_capacity(self.terms.len());
        for (n, t) in self.terms.iter().enumerate() {
            if t.sites.iter().any(|&s| s >= lat.n_sites()) {
                return Err(HallError::Validation(format!("term {n}: site out of range")));
            }
            let modes = t.modes.clone().unwrap_or_else(|| layout.modes_of_sites(&t.sites));
            let d = 1usize << modes.len();
            let rows_ok = |m: &Vec<Vec<f64>>| m.len() == d && m.iter().all(|r| r.len() == d);
            if !rows_ok(&t.re) || !t.im.as_ref().map(rows_ok).unwrap_or(true) {
                return Err(HallError::Validation(format!("term {n}: matrix must be {d}x{d}")));
            }
            let op = CMat::from_fn(d, d, |a, b| {
                Complex64::new(t.re[a][b], t.im.as_ref().map(|m| m[a][b]).unwrap_or(0.0))
            });
            terms.push(Term::new(t.sites.clone(), modes, op));
        }
        Ok((lat, layout, terms))
    }

    /// Assumption audit without building the spec.
    pub fn audit(&self) -> Result<ValidationReport> {
        let (lat, layout, terms) = self.parts()?;
        let j = self.j.unwrap_or_else(|| {
            let mut sums = vec![0.0f64; lat.n_sites()];
            for t in &terms {
                for &s in &t.sites {
                    sums[s] += t.norm();
                }
            }
            sums.into_iter().fold(0.0, f64::max)
        });
        Ok(validate_terms(&lat, &layout, self.range, self.k_max, j, &terms))
    }

    /// Validated spec; fails on the first violated assumption.
    pub fn build(&self) -> Result<ModelSpec> {
        let report = self.audit()?;
        if !report.pass {
            return Err(HallError::Validation(report.violations.join("; ")));
        }
        let (lat, layout, terms) = self.parts()?;
        ModelSpec::new(self.id.clone(), lat, layout, self.range, self.k_max, self.charge, terms)
    }
}

/// Chern number and curvature computed from single-particle orbitals only.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleChern {
    pub grid_n: usize,
    pub raw: f64,
    pub chern: i64,
    /// Plaquette phases, row-major in `(θy, θx)`.
    pub plaquettes: Vec<f64>,
}

/// Independent conductance oracle for quadratic fermion models: Slater
/// determinants of the occupied single-particle orbitals under the same
/// boundary twists as the many-body construction.
pub struct FreeFermionOracle<'a> {
    spec: &'a ModelSpec,
}

impl<'a> FreeFermionOracle<'a> {
    pub fn new(spec: &'a ModelSpec) -> Result<Self> {
        if !spec.is_quadratic() {
            return Err(HallError::Validation(format!("{} is not a quadratic fermion model", spec.id())));
        }
        Ok(FreeFermionOracle { spec })
    }

    /// Occupied orbitals at `flux` and the single-particle gap at the Fermi level.
    pub fn occupied(&self, flux: &Flux) -> Result<(CMat, f64)> {
        let q = self.spec.quadratic_hamiltonian(flux)?;
        let (e, v) = eigh(&q.h);
        let n = self.spec.charge();
        let gap = if n == 0 || n == e.len() { f64::INFINITY } else { e[n] - e[n - 1] };
        Ok((v.columns(0, n).clone_owned(), gap))
    }

    /// Berry phase `−arg Π⟨ψ_k|ψ_{k+1}⟩` around the counter-clockwise square
    /// with lower-left corner `(tx, ty)` and side `h`.
    pub fn plaquette_phase(&self, tx: f64, ty: f64, h: f64) -> Result<f64> {
        let corners = [(tx, ty), (tx + h, ty), (tx + h, ty + h), (tx, ty + h)];
        let states = corners
            .iter()
            .map(|&(a, b)| self.occupied(&Flux::xy(a, b)).map(|o| o.0))
            .collect::<Result<Vec<_>>>()?;
        let mut prod = Complex64::new(1.0, 0.0);
        for k in 0..4 {
            prod *= slater_overlap(&states[k], &states[(k + 1) % 4]);
        }
        Ok(-prod.arg())
    }

    /// Curvature `g(θx, θy)` from centred plaquettes, Richardson-extrapolated in the side.
    pub fn curvature(&self, flux: &Flux) -> Result<f64> {
        let h = 2e-3;
        let est = |s: f64| -> Result<f64> {
            Ok(self.plaquette_phase(flux.theta_x - s / 2.0, flux.theta_y - s / 2.0, s)? / (s * s))
        };
        let (coarse, fine) = (est(h)?, est(h / 2.0)?);
        Ok((4.0 * fine - coarse) / 3.0)
    }

    /// Plaquette-sum Chern number on an `n × n` grid of the flux torus.
    pub fn chern(&self, grid_n: usize) -> Result<OracleChern> {
        if grid_n < 2 {
            return Err(HallError::Validation("oracle grid must be at least 2x2".into()));
        }
        let step = 2.0 * PI / grid_n as f64;
        let mut states = Vec::with_capacity(grid_n * grid_n);
        for j in 0..grid_n {
            for i in 0..grid_n {
                states.push(self.occupied(&Flux::xy(i as f64 * step, j as f64 * step))?.0);
            }
        }
        let at = |i: usize, j: usize| &states[(j % grid_n) * grid_n + (i % grid_n)];
        let mut plaquettes = Vec::with_capacity(grid_n * grid_n);
        for j in 0..grid_n {
            for i in 0..grid_n {
                let loop_ = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
                let mut prod = Complex64::new(1.0, 0.0);
                for k in 0..4 {
                    prod *= slater_overlap(loop_[k], loop_[(k + 1) % 4]);
                }
                plaquettes.push(-prod.arg());
            }
        }
        let raw = plaquettes.iter().sum::<f64>() / (2.0 * PI);
        Ok(OracleChern { grid_n, raw, chern: raw.round() as i64, plaquettes })
    }
}
