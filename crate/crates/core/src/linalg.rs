//! Dense and sparse complex linear algebra helpers shared by the modules.

use faer::{Mat, MatRef, Side};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64::new(0.0, 1.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Compressed-row complex sparse matrix.
#[derive(Clone, Debug)]
pub struct SparseOp {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    data: Vec<Complex64>,
}

impl SparseOp {
    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(dim: usize, mut t: Vec<(u32, u32, Complex64)>) -> Self {
        t.sort_unstable_by_key(|&(r, c, _)| ((r as u64) << 32) | c as u64);
        let mut indptr = vec![0usize; dim + 1];
        let mut indices = Vec::with_capacity(t.len());
        let mut data: Vec<Complex64> = Vec::with_capacity(t.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..dim {
            indptr[i + 1] += indptr[i];
        }
        SparseOp { dim, indptr, indices, data }
    }

    pub fn zeros(dim: usize) -> Self {
        SparseOp { dim, indptr: vec![0; dim + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// `y = A x`.
    pub fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = ZERO;
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.data[k] * x[self.indices[k] as usize];
            }
            *yr = acc;
        }
    }

    pub fn apply(&self, x: &CVec) -> CVec {
        let mut y = CVec::zeros(self.dim);
        self.apply_into(x.as_slice(), y.as_mut_slice());
        y
    }

    /// `A X` for a dense block of columns.
    pub fn apply_mat(&self, x: &CMat) -> CMat {
        let mut y = CMat::zeros(self.dim, x.ncols());
        for c in 0..x.ncols() {
            let xc = x.column(c).clone_owned();
            let mut yc = CVec::zeros(self.dim);
            self.apply_into(xc.as_slice(), yc.as_mut_slice());
            y.set_column(c, &yc);
        }
        y
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.indptr[r]..self.indptr[r + 1] {
                m[(r, self.indices[k] as usize)] += self.data[k];
            }
        }
        m
    }

    /// `⟨x|A|y⟩`.
    pub fn expectation(&self, x: &CVec, y: &CVec) -> Complex64 {
        x.dotc(&self.apply(y))
    }

    /// Largest `|A_ij − conj(A_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.to_dense_if_small();
        match d {
            Some(m) => max_abs(&(&m - m.adjoint())),
            None => 0.0,
        }
    }

    fn to_dense_if_small(&self) -> Option<CMat> {
        (self.dim <= 4000).then(|| self.to_dense())
    }

    /// `self + s · other`, both on the same dimension.
    pub fn add_scaled(&self, other: &SparseOp, s: Complex64) -> SparseOp {
        let mut t = Vec::with_capacity(self.nnz() + other.nnz());
        for (op, f) in [(self, ONE), (other, s)] {
            for r in 0..op.dim {
                for k in op.indptr[r]..op.indptr[r + 1] {
                    t.push((r as u32, op.indices[k], op.data[k] * f));
                }
            }
        }
        SparseOp::from_triplets(self.dim, t)
    }
}

/// Largest entry modulus.
pub fn max_abs<'a>(m: impl IntoIterator<Item = &'a Complex64>) -> f64 {
    m.into_iter().fold(0.0, |a, z| a.max(z.norm()))
}

fn to_faer(m: &CMat) -> Mat<Complex64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: MatRef<'_, Complex64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `A B` through the blocked kernels of `faer`.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    from_faer((to_faer(a) * to_faer(b)).as_ref())
}

/// `A† B`.
pub fn matmul_adj(a: &CMat, b: &CMat) -> CMat {
    from_faer((to_faer(a).adjoint() * to_faer(b)).as_ref())
}

/// `V X V†`.
pub fn conjugate(v: &CMat, x: &CMat) -> CMat {
    let fv = to_faer(v);
    from_faer((&fv * to_faer(x) * fv.adjoint()).as_ref())
}

/// `V† X V`.
pub fn conjugate_adj(v: &CMat, x: &CMat) -> CMat {
    let fv = to_faer(v);
    from_faer((fv.adjoint() * to_faer(x) * &fv).as_ref())
}

/// Hermitian eigendecomposition with eigenvalues in ascending order.
pub fn eigh(m: &CMat) -> (DVector<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), CMat::zeros(0, 0));
    }
    let herm = Mat::from_fn(n, n, |i, j| (m[(i, j)] + m[(j, i)].conj()) * 0.5);
    match herm.self_adjoint_eigen(Side::Lower) {
        // faer returns eigenvalues in nondecreasing order
        Ok(eig) => {
            let s = eig.S();
            let vals = DVector::from_fn(n, |i, _| s[i].re);
            (vals, from_faer(eig.U()))
        }
        Err(_) => eigh_fallback(m),
    }
}

fn eigh_fallback(m: &CMat) -> (DVector<f64>, CMat) {
    let n = m.nrows();
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = CMat::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Real symmetric eigendecomposition, ascending.
pub fn eigh_real(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = DVector::from_iterator(n, idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (c, &i) in idx.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Rotates `v` so its first component above `tol` (relative) is real and positive.
pub fn fix_phase(v: &mut CVec) {
    let scale = max_abs(&*v);
    if scale == 0.0 {
        return;
    }
    if let Some(c) = v.iter().find(|c| c.norm() > 1e-8 * scale) {
        let ph = c.conj() / c.norm();
        *v *= ph;
    }
}

/// Trace norm of a Hermitian matrix.
pub fn hermitian_trace_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    eigh(m).0.iter().map(|x| x.abs()).sum()
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    match to_faer(m).singular_values() {
        Ok(s) => s.into_iter().fold(0.0, f64::max),
        Err(_) => m.clone().singular_values().max(),
    }
}

/// Spectral norm of a Hermitian matrix via its eigenvalues.
pub fn herm_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let (v, _) = eigh(m);
    v[0].abs().max(v[v.len() - 1].abs())
}

/// Closest isometry `Y (Y†Y)^{-1/2}`.
pub fn polar_isometry(y: &CMat) -> CMat {
    let g = matmul_adj(y, y);
    let (vals, vecs) = eigh(&g);
    let inv_sqrt = DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&x| Complex64::new(1.0 / x.max(1e-300).sqrt(), 0.0)),
    );
    let s = conjugate(&vecs, &CMat::from_diagonal(&inv_sqrt));
    matmul(y, &s)
}

/// `‖U†U − 1‖_max`.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let g = matmul_adj(u, u);
    max_abs(&(g - CMat::identity(u.ncols(), u.ncols())))
}

/// Least-squares slope of `ln y` against `ln x` and its RMS residual.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let resid = (lx
        .iter()
        .zip(&ly)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, resid)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Golub–Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let (vals, vecs) = eigh_real(&j);
    let w = (0..n).map(|i| 2.0 * vecs[(0, i)].powi(2)).collect();
    (vals.iter().copied().collect(), w)
}
