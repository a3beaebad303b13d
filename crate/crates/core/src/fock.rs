//! Occupation-number Hilbert spaces: mode layout, fixed-charge sectors,
//! local operator algebras with Jordan–Wigner signs, embedding of local
//! terms into sector operators, Slater states and reduced density matrices.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HallError, Result};
use crate::linalg::{CMat, CVec, SparseOp};

/// Particle statistics of every mode in a layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistics {
    Fermion,
    HardcoreBoson,
}

/// `orbitals` occupation-0/1 modes on each of `n_sites` sites.
///
/// Mode `site * orbitals + orbital`; the mode index is also the
/// Jordan–Wigner order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeLayout {
    pub n_sites: usize,
    pub orbitals: usize,
    pub statistics: Statistics,
}

impl ModeLayout {
    pub fn n_modes(&self) -> usize {
        self.n_sites * self.orbitals
    }

    pub fn mode(&self, site: usize, orbital: usize) -> usize {
        site * self.orbitals + orbital
    }

    pub fn site_of(&self, mode: usize) -> usize {
        mode / self.orbitals
    }

    /// Largest charge a single site can hold.
    pub fn q_max(&self) -> usize {
        self.orbitals
    }

    /// Bit mask of all modes on the given sites.
    pub fn mask_of_sites(&self, sites: &[usize]) -> u64 {
        let mut m = 0u64;
        for &s in sites {
            for o in 0..self.orbitals {
                m |= 1u64 << self.mode(s, o);
            }
        }
        m
    }

    pub fn modes_of_sites(&self, sites: &[usize]) -> Vec<usize> {
        let mut v: Vec<usize> = sites
            .iter()
            .flat_map(|&s| (0..self.orbitals).map(move |o| s * self.orbitals + o))
            .collect();
        v.sort_unstable();
        v
    }
}

/// Basis of all occupation configurations with total charge `charge`,
/// stored as sorted bit strings.
#[derive(Clone, Debug)]
pub struct Sector {
    layout: ModeLayout,
    charge: usize,
    states: Vec<u64>,
}

/// Default refusal threshold for sector enumeration.
pub const SECTOR_CAP: usize = 200_000;

fn binomial(n: usize, k: usize) -> Option<usize> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

impl Sector {
    pub fn new(layout: ModeLayout, charge: usize) -> Result<Self> {
        Self::with_cap(layout, charge, SECTOR_CAP)
    }

    pub fn with_cap(layout: ModeLayout, charge: usize, cap: usize) -> Result<Self> {
        let n = layout.n_modes();
        if n > 64 {
            return Err(HallError::Validation(format!("{n} modes exceed the 64-mode bit-string limit")));
        }
        if charge > n {
            return Err(HallError::Validation(format!("charge {charge} exceeds {n} modes")));
        }
        let dim = binomial(n, charge).unwrap_or(usize::MAX);
        if dim > cap {
            return Err(HallError::Validation(format!(
                "sector dimension {dim} exceeds cap {cap} (modes {n}, charge {charge})"
            )));
        }
        let mut states = Vec::with_capacity(dim);
        if charge == 0 {
            states.push(0);
        } else {
            // Gosper's hack enumerates k-subsets in increasing order
            let mut v: u64 = (1u64 << charge) - 1;
            let limit: u128 = 1u128 << n;
            while (v as u128) < limit {
                states.push(v);
                let c = v & v.wrapping_neg();
                let r = v.wrapping_add(c);
                if r == 0 {
                    break;
                }
                v = (((r ^ v) >> 2) / c) | r;
            }
        }
        Ok(Sector { layout, charge, states })
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn charge(&self) -> usize {
        self.charge
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn state(&self, i: usize) -> u64 {
        self.states[i]
    }

    pub fn index(&self, st: u64) -> Option<usize> {
        self.states.binary_search(&st).ok()
    }

    /// Diagonal of the charge counted on the modes in `mask`.
    pub fn charge_diagonal(&self, mask: u64) -> Vec<f64> {
        self.states.iter().map(|&s| (s & mask).count_ones() as f64).collect()
    }

    /// Fock amplitudes of the Slater determinant with the given orbital columns.
    pub fn slater_amplitudes(&self, orbitals: &CMat) -> Result<CVec> {
        if self.layout.statistics != Statistics::Fermion {
            return Err(HallError::Validation("Slater states need fermionic modes".into()));
        }
        let n = orbitals.ncols();
        if n != self.charge || orbitals.nrows() != self.layout.n_modes() {
            return Err(HallError::Validation("orbital matrix does not match sector".into()));
        }
        let mut out = DVector::zeros(self.dim());
        let mut sub = DMatrix::<Complex64>::zeros(n, n);
        for (i, &st) in self.states.iter().enumerate() {
            let mut r = 0;
            let mut bits = st;
            while bits != 0 {
                let m = bits.trailing_zeros() as usize;
                for c in 0..n {
                    sub[(r, c)] = orbitals[(m, c)];
                }
                r += 1;
                bits &= bits - 1;
            }
            out[i] = if n == 0 { Complex64::new(1.0, 0.0) } else { sub.clone().determinant() };
        }
        Ok(out)
    }
}

/// Operator algebra of a small ordered set of modes, basis `|n_0 n_1 …⟩`
/// with bit `a` the occupation of `modes[a]` and states built as
/// `c†_{modes[0]}^{n_0} c†_{modes[1]}^{n_1} … |0⟩`.
#[derive(Clone, Debug)]
pub struct LocalSpace {
    modes: Vec<usize>,
    statistics: Statistics,
}

impl LocalSpace {
    pub fn new(mut modes: Vec<usize>, statistics: Statistics) -> Self {
        modes.sort_unstable();
        modes.dedup();
        LocalSpace { modes, statistics }
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn dim(&self) -> usize {
        1usize << self.modes.len()
    }

    fn slot(&self, mode: usize) -> usize {
        self.modes
            .iter()
            .position(|&m| m == mode)
            .unwrap_or_else(|| panic!("mode {mode} not in local space"))
    }

    /// Annihilator of a global mode (must belong to this space).
    pub fn annihilator(&self, mode: usize) -> CMat {
        let a = self.slot(mode);
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for b in 0..d {
            if b >> a & 1 == 1 {
                let below = (b & ((1usize << a) - 1)).count_ones();
                let sign = match self.statistics {
                    Statistics::Fermion if below % 2 == 1 => -1.0,
                    _ => 1.0,
                };
                m[(b ^ (1 << a), b)] = Complex64::new(sign, 0.0);
            }
        }
        m
    }

    pub fn creator(&self, mode: usize) -> CMat {
        self.annihilator(mode).adjoint()
    }

    pub fn number(&self, mode: usize) -> CMat {
        let a = self.slot(mode);
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| {
            if i == j && i >> a & 1 == 1 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn identity(&self) -> CMat {
        DMatrix::identity(self.dim(), self.dim())
    }

    /// `t · c†_i c_j + h.c.`
    pub fn hopping(&self, i: usize, j: usize, t: Complex64) -> CMat {
        let h = self.creator(i) * self.annihilator(j) * t;
        &h + h.adjoint()
    }

    /// Local charge (occupation count) of a local configuration restricted to `slots`.
    pub fn count(config: usize, slot_mask: usize) -> i64 {
        (config & slot_mask).count_ones() as i64
    }

    /// Local slot mask of the modes satisfying `pred`.
    pub fn slot_mask(&self, pred: impl Fn(usize) -> bool) -> usize {
        let mut m = 0usize;
        for (a, &mode) in self.modes.iter().enumerate() {
            if pred(mode) {
                m |= 1 << a;
            }
        }
        m
    }
}

#[inline]
fn gather(st: u64, modes: &[usize]) -> usize {
    let mut c = 0usize;
    for (a, &m) in modes.iter().enumerate() {
        c |= ((st >> m & 1) as usize) << a;
    }
    c
}

#[inline]
fn scatter(config: usize, modes: &[usize]) -> u64 {
    let mut st = 0u64;
    for (a, &m) in modes.iter().enumerate() {
        st |= ((config >> a & 1) as u64) << m;
    }
    st
}

/// Parity of moving the creators of `modes` in front of the others.
#[inline]
fn reorder_parity(st: u64, modes: &[usize], zmask: u64) -> u32 {
    let rest = st & !zmask;
    let mut p = 0u32;
    for &m in modes {
        if st >> m & 1 == 1 {
            p += (rest & ((1u64 << m) - 1)).count_ones();
        }
    }
    p & 1
}

/// Column-grouped nonzero structure of a local matrix.
pub(crate) struct LocalColumns {
    modes: Vec<usize>,
    zmask: u64,
    cols: Vec<Vec<(usize, Complex64)>>,
}

impl LocalColumns {
    pub(crate) fn new(modes: &[usize], mat: &CMat, cutoff: f64) -> Self {
        let d = mat.ncols();
        let mut cols = vec![Vec::new(); d];
        for (b, col) in cols.iter_mut().enumerate() {
            for a in 0..d {
                let v = mat[(a, b)];
                if v.norm() > cutoff {
                    col.push((a, v));
                }
            }
        }
        let zmask = modes.iter().fold(0u64, |m, &x| m | 1u64 << x);
        LocalColumns { modes: modes.to_vec(), zmask, cols }
    }
}

/// Accumulates local terms into a sector operator.
pub struct SectorAssembler<'a> {
    sector: &'a Sector,
    triplets: Vec<(u32, u32, Complex64)>,
}

impl<'a> SectorAssembler<'a> {
    pub fn new(sector: &'a Sector) -> Self {
        SectorAssembler { sector, triplets: Vec::new() }
    }

    /// Adds the embedding of `mat` acting on `modes`.
    pub fn add(&mut self, modes: &[usize], mat: &CMat) -> Result<()> {
        let lc = LocalColumns::new(modes, mat, 0.0);
        self.add_columns(&lc)
    }

    pub(crate) fn add_columns(&mut self, lc: &LocalColumns) -> Result<()> {
        let fermi = self.sector.layout.statistics == Statistics::Fermion;
        for (j, &st) in self.sector.states.iter().enumerate() {
            let b = gather(st, &lc.modes);
            let col = &lc.cols[b];
            if col.is_empty() {
                continue;
            }
            let base = st & !lc.zmask;
            let p_in = if fermi { reorder_parity(st, &lc.modes, lc.zmask) } else { 0 };
            for &(a, v) in col {
                let st2 = base | scatter(a, &lc.modes);
                let Some(i) = self.sector.index(st2) else {
                    return Err(HallError::Validation(
                        "local term leaves the charge sector (not charge conserving)".into(),
                    ));
                };
                let p_out = if fermi { reorder_parity(st2, &lc.modes, lc.zmask) } else { 0 };
                let val = if (p_in + p_out) % 2 == 1 { -v } else { v };
                self.triplets.push((i as u32, j as u32, val));
            }
        }
        Ok(())
    }

    pub fn finish(self) -> SparseOp {
        SparseOp::from_triplets(self.sector.dim(), self.triplets)
    }
}

/// Block-diagonal reduced density matrix of a fixed-charge state on a mode subset.
///
/// Blocks are keyed by the number of particles inside the subset; each block
/// lists its local configurations (bit `a` ↔ `modes[a]`).
#[derive(Clone, Debug)]
pub struct ReducedDensity {
    pub modes: Vec<usize>,
    pub blocks: BTreeMap<usize, (Vec<usize>, CMat)>,
}

impl ReducedDensity {
    pub fn trace(&self) -> f64 {
        self.blocks.values().map(|(_, m)| m.trace().re).sum()
    }

    /// Applies `ρ ↦ e^{iθQ} ρ e^{−iθQ}` with `Q` counting the local slots in `slot_mask`.
    pub fn rotated(&self, theta: f64, slot_mask: usize) -> ReducedDensity {
        let mut out = self.clone();
        for (cfgs, m) in out.blocks.values_mut() {
            for (i, &a) in cfgs.iter().enumerate() {
                for (j, &b) in cfgs.iter().enumerate() {
                    let dq = LocalSpace::count(a, slot_mask) - LocalSpace::count(b, slot_mask);
                    if dq != 0 {
                        m[(i, j)] *= Complex64::from_polar(1.0, theta * dq as f64);
                    }
                }
            }
        }
        out
    }

    /// Trace norm `‖ρ − σ‖₁` (both on the same modes).
    pub fn trace_distance(&self, other: &ReducedDensity) -> f64 {
        let mut total = 0.0;
        for (k, (_, a)) in &self.blocks {
            let diff = match other.blocks.get(k) {
                Some((_, b)) => a - b,
                None => a.clone(),
            };
            total += crate::linalg::hermitian_trace_norm(&diff);
        }
        for (k, (_, b)) in &other.blocks {
            if !self.blocks.contains_key(k) {
                total += crate::linalg::hermitian_trace_norm(b);
            }
        }
        total
    }
}

/// Reduced density matrix of `psi` on `modes`, tracing out every other mode.
pub fn reduced_density(sector: &Sector, psi: &CVec, modes: &[usize]) -> ReducedDensity {
    let mut modes = modes.to_vec();
    modes.sort_unstable();
    let zmask = modes.iter().fold(0u64, |m, &x| m | 1u64 << x);
    let fermi = sector.layout.statistics == Statistics::Fermion;
    // group amplitudes by environment configuration
    let mut env: BTreeMap<u64, Vec<(usize, Complex64)>> = BTreeMap::new();
    for (i, &st) in sector.states.iter().enumerate() {
        let amp = psi[i];
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let sign = if fermi && reorder_parity(st, &modes, zmask) == 1 { -1.0 } else { 1.0 };
        env.entry(st & !zmask).or_default().push((gather(st, &modes), amp * sign));
    }
    let mut blocks: BTreeMap<usize, (Vec<usize>, CMat)> = BTreeMap::new();
    let k = modes.len();
    for n in 0..=k {
        let cfgs: Vec<usize> = (0..1usize << k).filter(|c| c.count_ones() as usize == n).collect();
        let d = cfgs.len();
        blocks.insert(n, (cfgs, DMatrix::zeros(d, d)));
    }
    for list in env.values() {
        for &(a, va) in list {
            let n = a.count_ones() as usize;
            let (cfgs, m) = blocks.get_mut(&n).unwrap();
            let ia = cfgs.binary_search(&a).unwrap();
            for &(b, vb) in list {
                if b.count_ones() as usize != n {
                    continue;
                }
                let ib = cfgs.binary_search(&b).unwrap();
                m[(ia, ib)] += va * vb.conj();
            }
        }
    }
    blocks.retain(|_, (_, m)| m.iter().any(|v| v.norm() > 0.0));
    ReducedDensity { modes, blocks }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn test_sector_dimension() {
        let lay = ModeLayout { n_sites: 9, orbitals: 2, statistics: Statistics::Fermion };
        let s = Sector::new(lay, 9).unwrap();
        assert_eq!(s.dim(), 48620);
        assert!(s.states().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn test_sector_cap_rejects() {
        let lay = ModeLayout { n_sites: 25, orbitals: 2, statistics: Statistics::Fermion };
        assert!(Sector::new(lay, 25).is_err());
    }

    #[test]
    fn test_fermion_anticommutation() {
        let ls = LocalSpace::new(vec![2, 5, 7], Statistics::Fermion);
        for &i in ls.modes() {
            for &j in ls.modes() {
                let ac = ls.annihilator(i) * ls.creator(j) + ls.creator(j) * ls.annihilator(i);
                let expect = if i == j { ls.identity() } else { DMatrix::zeros(8, 8) };
                assert!((ac - expect).norm() < 1e-14);
                let aa = ls.annihilator(i) * ls.annihilator(j) + ls.annihilator(j) * ls.annihilator(i);
                assert!(aa.norm() < 1e-14);
            }
        }
    }

    #[test]
    fn test_embedded_hopping_sign() {
        // c†_0 c_2 on |mode1 mode2⟩ = c†_1 c†_2 |0⟩ gives c†_0 c_2 c†_1 c†_2|0⟩ = −c†_0 c†_1 |0⟩
        let lay = ModeLayout { n_sites: 3, orbitals: 1, statistics: Statistics::Fermion };
        let sec = Sector::new(lay, 2).unwrap();
        let ls = LocalSpace::new(vec![0, 2], Statistics::Fermion);
        let op = ls.creator(0) * ls.annihilator(2);
        let mut asm = SectorAssembler::new(&sec);
        asm.add(ls.modes(), &op).unwrap();
        let m = asm.finish().to_dense();
        let from = sec.index(0b110).unwrap();
        let to = sec.index(0b011).unwrap();
        assert!((m[(to, from)] - c(-1.0)).norm() < 1e-14);
    }

    #[test]
    fn test_slater_single_mode() {
        let lay = ModeLayout { n_sites: 3, orbitals: 1, statistics: Statistics::Fermion };
        let sec = Sector::new(lay, 1).unwrap();
        let phi = DMatrix::from_column_slice(3, 1, &[c(0.0), c(1.0), c(0.0)]);
        let v = sec.slater_amplitudes(&phi).unwrap();
        assert_eq!(v[sec.index(0b010).unwrap()], c(1.0));
    }
}
