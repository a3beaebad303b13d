//! Ground states, gaps and linear solves: dense diagonalization below the
//! dense threshold, restarted Lanczos with full reorthogonalization above
//! it, and Slater ground states of quadratic fermion models.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HallError, Result};
use crate::hamiltonian::Quadratic;
use crate::linalg::{eigh, eigh_real, fix_phase, CMat, CVec, SparseOp};

/// Sector dimension above which iterative methods replace dense ones.
pub const DENSE_THRESHOLD: usize = 2000;
/// Gaps below this are reported as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    pub first_excited: f64,
    pub gap: f64,
    pub psi: CVec,
    pub degenerate: bool,
}

impl GroundState {
    /// Fails with a numerical error when the ground state is not unique.
    pub fn require_unique(self) -> Result<Self> {
        if self.degenerate {
            return Err(HallError::Numerical(format!(
                "degenerate ground state (gap {:.3e} below {DEGENERACY_TOL:.0e})",
                self.gap
            )));
        }
        Ok(self)
    }
}

/// Full spectrum of a dense Hermitian matrix.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub energies: DVector<f64>,
    pub states: CMat,
}

impl Spectrum {
    pub fn of(h: &CMat) -> Self {
        let (energies, states) = eigh(h);
        Spectrum { energies, states }
    }

    pub fn ground_state(&self) -> GroundState {
        let e0 = self.energies[0];
        let e1 = if self.energies.len() > 1 { self.energies[1] } else { f64::INFINITY };
        let mut psi = self.states.column(0).clone_owned();
        fix_phase(&mut psi);
        let gap = e1 - e0;
        GroundState { energy: e0, first_excited: e1, gap, psi, degenerate: gap < DEGENERACY_TOL }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    pub max_krylov: usize,
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { max_krylov: 120, tol: 1e-11, max_restarts: 40, seed: 7 }
    }
}

fn random_unit(dim: usize, seed: u64) -> CVec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = CVec::from_fn(dim, |_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    let n = v.norm();
    v / Complex64::new(n, 0.0)
}

fn orthogonalize(w: &mut CVec, basis: &[CVec]) {
    for _ in 0..2 {
        for b in basis {
            let c = b.dotc(w);
            w.axpy(-c, b, Complex64::new(1.0, 0.0));
        }
    }
}

/// Lowest eigenpair of `op` restricted to the orthogonal complement of `deflate`.
pub fn lanczos_lowest(op: &SparseOp, deflate: &[CVec], opts: &LanczosOptions) -> Result<(f64, CVec)> {
    let dim = op.dim();
    let mut start = random_unit(dim, opts.seed);
    let m_max = opts.max_krylov.min(dim.saturating_sub(deflate.len())).max(1);
    for _restart in 0..=opts.max_restarts {
        orthogonalize(&mut start, deflate);
        let n0 = start.norm();
        if n0 < 1e-300 {
            return Err(HallError::Numerical("Lanczos start vector vanished".into()));
        }
        let mut basis: Vec<CVec> = vec![&start / Complex64::new(n0, 0.0)];
        let mut alpha: Vec<f64> = Vec::new();
        let mut beta: Vec<f64> = Vec::new();
        let mut best: Option<(f64, DVector<f64>)> = None;
        let mut converged = false;
        for j in 0..m_max {
            let mut w = op.apply(&basis[j]);
            orthogonalize(&mut w, deflate);
            let a = basis[j].dotc(&w).re;
            alpha.push(a);
            orthogonalize(&mut w, &basis);
            let b = w.norm();
            let k = alpha.len();
            let check = k.is_multiple_of(5) || b < 1e-13 || j + 1 == m_max;
            if check {
                let mut t = DMatrix::<f64>::zeros(k, k);
                for i in 0..k {
                    t[(i, i)] = alpha[i];
                    if i + 1 < k {
                        t[(i, i + 1)] = beta[i];
                        t[(i + 1, i)] = beta[i];
                    }
                }
                let (vals, vecs) = eigh_real(&t);
                let s = vecs.column(0).clone_owned();
                let resid = b * s[k - 1].abs();
                best = Some((vals[0], s));
                if resid <= opts.tol * vals[0].abs().max(1.0) || b < 1e-13 {
                    converged = true;
                    break;
                }
            }
            if j + 1 < m_max {
                beta.push(b);
                basis.push(w / Complex64::new(b, 0.0));
            }
        }
        let (theta, s) = best.expect("at least one Ritz check");
        let mut x = CVec::zeros(dim);
        for (i, v) in basis.iter().enumerate().take(s.len()) {
            x.axpy(Complex64::new(s[i], 0.0), v, Complex64::new(1.0, 0.0));
        }
        let nx = x.norm();
        x /= Complex64::new(nx, 0.0);
        if converged {
            return Ok((theta, x));
        }
        start = x;
    }
    Err(HallError::Numerical("Lanczos did not converge".into()))
}

/// Ground state and gap of a sector operator, dense or iterative by size.
pub fn ground_state(op: &SparseOp) -> Result<GroundState> {
    if op.dim() <= DENSE_THRESHOLD {
        return Ok(Spectrum::of(&op.to_dense()).ground_state());
    }
    let opts = LanczosOptions::default();
    let (e0, mut psi) = lanczos_lowest(op, &[], &opts)?;
    let loose = LanczosOptions { tol: 1e-8, seed: opts.seed + 1, ..opts };
    let (e1, _) = lanczos_lowest(op, std::slice::from_ref(&psi), &loose)?;
    fix_phase(&mut psi);
    let gap = e1 - e0;
    Ok(GroundState { energy: e0, first_excited: e1, gap, psi, degenerate: gap < DEGENERACY_TOL })
}

/// Solves `(H − E0) x = b` on the complement of `psi0` by projected conjugate gradients.
pub fn solve_shifted(op: &SparseOp, e0: f64, psi0: &CVec, b: &CVec, tol: f64) -> Result<CVec> {
    let project = |v: &mut CVec| {
        let c = psi0.dotc(v);
        v.axpy(-c, psi0, Complex64::new(1.0, 0.0));
    };
    let shifted = |v: &CVec| {
        let mut w = op.apply(v);
        w.axpy(Complex64::new(-e0, 0.0), v, Complex64::new(1.0, 0.0));
        w
    };
    let mut rhs = b.clone();
    project(&mut rhs);
    let bn = rhs.norm();
    if bn == 0.0 {
        return Ok(CVec::zeros(b.len()));
    }
    let mut x = CVec::zeros(b.len());
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    for _ in 0..(10 * b.len()).max(1000) {
        let mut ap = shifted(&p);
        project(&mut ap);
        let alpha = rr / p.dotc(&ap).re;
        x.axpy(Complex64::new(alpha, 0.0), &p, Complex64::new(1.0, 0.0));
        r.axpy(Complex64::new(-alpha, 0.0), &ap, Complex64::new(1.0, 0.0));
        let rr_new = r.norm_squared();
        if rr_new.sqrt() <= tol * bn {
            project(&mut x);
            return Ok(x);
        }
        p = &r + &p * Complex64::new(rr_new / rr, 0.0);
        rr = rr_new;
    }
    Err(HallError::Numerical("projected CG did not converge".into()))
}

/// Ground state of a quadratic fermion model: the lowest `n` orbitals.
#[derive(Clone, Debug)]
pub struct SlaterGround {
    pub levels: DVector<f64>,
    pub modes: CMat,
    pub orbitals: CMat,
    pub energy: f64,
    pub gap: f64,
    pub degenerate: bool,
}

pub fn slater_ground(q: &Quadratic, n: usize) -> Result<SlaterGround> {
    let nm = q.h.nrows();
    if n > nm {
        return Err(HallError::Validation("more particles than modes".into()));
    }
    let (levels, modes) = eigh(&q.h);
    let mut orbitals = modes.columns(0, n).clone_owned();
    for c in 0..n {
        let mut col = orbitals.column(c).clone_owned();
        fix_phase(&mut col);
        orbitals.set_column(c, &col);
    }
    let energy = levels.iter().take(n).sum::<f64>() + q.constant;
    let gap = if n == 0 || n == nm { f64::INFINITY } else { levels[n] - levels[n - 1] };
    Ok(SlaterGround { levels, modes, orbitals, energy, gap, degenerate: gap < DEGENERACY_TOL })
}

/// `det(A†B)`, the overlap of two Slater determinants.
pub fn slater_overlap(a: &CMat, b: &CMat) -> Complex64 {
    if a.ncols() == 0 {
        return Complex64::new(1.0, 0.0);
    }
    (a.adjoint() * b).determinant()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ZERO;

    fn random_hermitian_sparse(n: usize, seed: u64) -> SparseOp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i as u32, i as u32, Complex64::new(rng.random::<f64>() * 4.0, 0.0)));
            for _ in 0..3 {
                let j = rng.random_range(0..n);
                if j == i {
                    continue;
                }
                let v = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
                t.push((i as u32, j as u32, v));
                t.push((j as u32, i as u32, v.conj()));
            }
        }
        SparseOp::from_triplets(n, t)
    }

    #[test]
    fn test_lanczos_matches_dense() {
        let op = random_hermitian_sparse(300, 3);
        let dense = Spectrum::of(&op.to_dense());
        let (e0, v) = lanczos_lowest(&op, &[], &LanczosOptions::default()).unwrap();
        assert!((e0 - dense.energies[0]).abs() < 1e-10);
        let ov = dense.states.column(0).dotc(&v).norm();
        assert!((ov - 1.0).abs() < 1e-9);
        let (e1, _) = lanczos_lowest(&op, &[v], &LanczosOptions { tol: 1e-10, ..Default::default() }).unwrap();
        assert!((e1 - dense.energies[1]).abs() < 1e-8);
    }

    #[test]
    fn test_shifted_solve_residual() {
        let op = random_hermitian_sparse(200, 5);
        let sp = Spectrum::of(&op.to_dense());
        let gs = sp.ground_state();
        let b = CVec::from_fn(200, |i, _| Complex64::new((i as f64).sin(), 0.3));
        let x = solve_shifted(&op, gs.energy, &gs.psi, &b, 1e-12).unwrap();
        let mut lhs = op.apply(&x) - &x * Complex64::new(gs.energy, 0.0);
        let mut rhs = b.clone();
        for v in [&mut lhs, &mut rhs] {
            let c = gs.psi.dotc(v);
            v.axpy(-c, &gs.psi, Complex64::new(1.0, 0.0));
        }
        assert!((lhs - rhs).norm() < 1e-9);
        assert!(gs.psi.dotc(&x).norm() < 1e-12 || gs.psi.dotc(&x) == ZERO);
    }
}
