//! Dense complex linear algebra: matrices, a cyclic Jacobi eigensolver for
//! Hermitian matrices, spectral functions, shifted solves and operator norms.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Numerical tolerances used by the kernels in this module.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative Hermiticity tolerance, scaled by `max(1, max|M_ij|)`.
    pub hermitian: f64,
    /// Jacobi stops once the off-diagonal Frobenius mass drops below this fraction of `‖M‖_F`.
    pub jacobi_offdiag: f64,
    pub jacobi_max_sweeps: usize,
    /// Dimension above which `operator_norm` switches from full diagonalization to Lanczos.
    pub dense_norm_cutoff: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermitian: 1e-12,
            jacobi_offdiag: 1e-14,
            jacobi_max_sweeps: 100,
            dense_norm_cutoff: 96,
        }
    }
}

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(CMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = C64::new(v, 0.0);
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Outer product `|u⟩⟨v|`.
    pub fn outer(u: &[C64], v: &[C64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [C64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self.data[i * self.cols + j]).collect()
    }

    pub fn diag(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    /// `self + s·1`.
    pub fn shift(&self, s: C64) -> Self {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out.data[i * self.cols + i] += s;
        }
        out
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "matmul: inner dimensions differ");
        let (r, n, c) = (self.rows, self.cols, other.cols);
        let mut out = vec![ZERO; r * c];
        for i in 0..r {
            let orow = &mut out[i * c..(i + 1) * c];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let brow = &other.data[k * c..(k + 1) * c];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        CMatrix { rows: r, cols: c, data: out }
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "matvec: dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `self† v` without forming the adjoint.
    pub fn adjoint_matvec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.rows, v.len(), "adjoint_matvec: dimension mismatch");
        let mut out = vec![ZERO; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            if vi == ZERO {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * vi;
            }
        }
        out
    }

    pub fn commutator(&self, other: &CMatrix) -> CMatrix {
        &self.matmul(other) - &other.matmul(self)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "max_abs_diff: shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `max_ij |M_ij − conj(M_ji)|`.
    pub fn hermitian_asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_asymmetry() <= tol * self.max_abs().max(1.0)
    }

    /// Copy of the block `rows r0..r0+nr`, `cols c0..c0+nc`.
    pub fn submatrix(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> CMatrix {
        let mut out = CMatrix::zeros(nr, nc);
        for i in 0..nr {
            let src = &self.data[(r0 + i) * self.cols + c0..(r0 + i) * self.cols + c0 + nc];
            out.data[i * nc..(i + 1) * nc].copy_from_slice(src);
        }
        out
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &CMatrix) {
        for i in 0..block.rows {
            let dst = (r0 + i) * self.cols + c0;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(i));
        }
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let (r, c) = (self.rows * other.rows, self.cols * other.cols);
        let mut out = CMatrix::zeros(r, c);
        for i in 0..self.rows {
            for j in 0..self.cols {
                let a = self[(i, j)];
                if a == ZERO {
                    continue;
                }
                for k in 0..other.rows {
                    for l in 0..other.cols {
                        out.data[(i * other.rows + k) * c + j * other.cols + l] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    /// Hermitian part `(M + M†)/2`; used to remove roundoff asymmetry.
    pub fn hermitian_part(&self) -> CMatrix {
        (&(self + &self.adjoint())).scale_real(0.5)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add: shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub: shape mismatch");
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl AddAssign<&CMatrix> for CMatrix {
    fn add_assign(&mut self, rhs: &CMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "add_assign: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&CMatrix> for CMatrix {
    fn sub_assign(&mut self, rhs: &CMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "sub_assign: shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_real(-1.0)
    }
}

/// Eigenvalues in ascending order with the unitary whose columns are the eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigenDecomposition {
    /// `U g(Λ) U†`.
    pub fn apply(&self, g: impl Fn(f64) -> C64) -> Result<CMatrix> {
        let gv = self
            .values
            .iter()
            .map(|&l| {
                let z = g(l);
                if z.re.is_finite() && z.im.is_finite() {
                    Ok(z)
                } else {
                    Err(Error::Domain { eigenvalue: l })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.apply_values(&gv))
    }

    /// `U diag(values) U†` for precomputed function values.
    pub fn apply_values(&self, gv: &[C64]) -> CMatrix {
        let u = &self.vectors;
        let n = u.rows();
        let mut scaled = u.clone();
        for i in 0..n {
            for (z, &g) in scaled.row_mut(i).iter_mut().zip(gv) {
                *z *= g;
            }
        }
        scaled.matmul(&u.adjoint())
    }

    pub fn reconstruct(&self) -> CMatrix {
        let d: Vec<C64> = self.values.iter().map(|&l| C64::new(l, 0.0)).collect();
        self.apply_values(&d)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn hermitian_eig(m: &CMatrix) -> Result<EigenDecomposition> {
    hermitian_eig_with(m, &Tolerances::default())
}

/// Cyclic complex Jacobi. Each rotation first removes the phase of `a_pq`
/// and then applies a real rotation in the (p, q) plane.
pub fn hermitian_eig_with(m: &CMatrix, tol: &Tolerances) -> Result<EigenDecomposition> {
    if !m.is_square() || m.rows() == 0 {
        return Err(Error::Dimension(format!("eigensolver needs a nonempty square matrix, got {}x{}", m.rows(), m.cols())));
    }
    let asym = m.hermitian_asymmetry();
    if asym > tol.hermitian * m.max_abs().max(1.0) {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    let n = m.rows();
    let mut a = m.hermitian_part();
    for i in 0..n {
        a.data[i * n + i].im = 0.0;
    }
    // rows of `vt` are the eigenvectors, so updates stay contiguous
    let mut vt = CMatrix::identity(n);
    let norm_f = a.frobenius_norm();
    let target = tol.jacobi_offdiag * norm_f;
    let offdiag = |a: &CMatrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a.data[i * n + j].norm_sqr();
                }
            }
        }
        s.sqrt()
    };
    let mut off = offdiag(&a);
    let mut sweeps = 0;
    while off > target {
        if sweeps == tol.jacobi_max_sweeps {
            return Err(Error::NoConvergence { sweeps, residual: off });
        }
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.data[p * n + q];
                let r = apq.norm();
                if r == 0.0 || r <= 1e-18 * norm_f {
                    continue;
                }
                let app = a.data[p * n + p].re;
                let aqq = a.data[q * n + q].re;
                if r < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
                    a.data[p * n + q] = ZERO;
                    a.data[q * n + p] = ZERO;
                    continue;
                }
                rotated = true;
                let phase = apq / r;
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let ph_conj = phase.conj();
                // columns: A ← A J with J = [[c, s], [−s e^{−iφ}, c e^{−iφ}]]
                for k in 0..n {
                    let akp = a.data[k * n + p];
                    let akq = a.data[k * n + q];
                    a.data[k * n + p] = akp * c - akq * ph_conj * s;
                    a.data[k * n + q] = akp * s + akq * ph_conj * c;
                }
                // rows: A ← J† A
                for k in 0..n {
                    let apk = a.data[p * n + k];
                    let aqk = a.data[q * n + k];
                    a.data[p * n + k] = apk * c - aqk * phase * s;
                    a.data[q * n + k] = apk * s + aqk * phase * c;
                }
                a.data[p * n + q] = ZERO;
                a.data[q * n + p] = ZERO;
                a.data[p * n + p] = C64::new(app - t * r, 0.0);
                a.data[q * n + q] = C64::new(aqq + t * r, 0.0);
                // eigenvector rows: V ← V J, stored transposed
                let (head, tail) = vt.data.split_at_mut(q * n);
                let vp = &mut head[p * n..(p + 1) * n];
                let vq = &mut tail[..n];
                for k in 0..n {
                    let x = vp[k];
                    let y = vq[k];
                    vp[k] = x * c - y * ph_conj * s;
                    vq[k] = x * s + y * ph_conj * c;
                }
            }
        }
        off = offdiag(&a);
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.data[i * n + i].re.total_cmp(&a.data[j * n + j].re).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a.data[i * n + i].re).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        for k in 0..n {
            vectors.data[k * n + col] = vt.data[i * n + k];
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

/// `g(M)` for Hermitian `M` via its eigendecomposition.
pub fn matrix_function(m: &CMatrix, g: impl Fn(f64) -> C64) -> Result<CMatrix> {
    hermitian_eig(m)?.apply(g)
}

/// LU factorization with partial pivoting of a square complex matrix.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: CMatrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(m: &CMatrix) -> Result<Lu> {
        if !m.is_square() {
            return Err(Error::Dimension("LU needs a square matrix".into()));
        }
        let n = m.rows();
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (piv, pval) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if pval <= 1e-15 * scale {
                return Err(Error::Singular);
            }
            if piv != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let inv = ONE / lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] * inv;
                lu[(i, k)] = f;
                if f == ZERO {
                    continue;
                }
                for j in k + 1..n {
                    let u = lu.data[k * n + j];
                    lu.data[i * n + j] -= f * u;
                }
            }
        }
        Ok(Lu { lu, perm })
    }

    pub fn solve_vec(&self, b: &[C64]) -> Vec<C64> {
        let n = self.lu.rows();
        let mut x: Vec<C64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(b.rows(), b.cols());
        for j in 0..b.cols() {
            let x = self.solve_vec(&b.column(j));
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }
}

/// Solves `(iλ·1 + M) X = B` by LU with partial pivoting.
pub fn solve_shifted(m: &CMatrix, lambda: f64, b: &CMatrix) -> Result<CMatrix> {
    if lambda == 0.0 {
        return Err(Error::InvalidArgument("resolvent parameter λ must be nonzero".into()));
    }
    if !m.is_hermitian(Tolerances::default().hermitian) {
        return Err(Error::NotHermitian { asymmetry: m.hermitian_asymmetry() });
    }
    if b.rows() != m.rows() {
        return Err(Error::Dimension(format!("right-hand side has {} rows, matrix has {}", b.rows(), m.rows())));
    }
    Ok(Lu::factor(&m.shift(C64::new(0.0, lambda)))?.solve(b))
}

pub fn inner(u: &[C64], v: &[C64]) -> C64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value of `M`, the square root of the top eigenvalue of `M†M`.
pub fn operator_norm(m: &CMatrix) -> f64 {
    operator_norm_with(m, &Tolerances::default())
}

pub fn operator_norm_with(m: &CMatrix, tol: &Tolerances) -> f64 {
    if m.rows() == 0 || m.cols() == 0 {
        return 0.0;
    }
    let scale = m.max_abs();
    if scale == 0.0 {
        return 0.0;
    }
    if m.cols() <= tol.dense_norm_cutoff {
        let gram = m.adjoint().matmul(m).hermitian_part();
        if let Ok(eig) = hermitian_eig_with(&gram, tol) {
            return eig.values.last().copied().unwrap_or(0.0).max(0.0).sqrt();
        }
    }
    let n = m.cols();
    top_eigenvalue_lanczos(n, |v| m.adjoint_matvec(&m.matvec(v))).max(0.0).sqrt()
}

/// Largest eigenvalue of a positive semidefinite operator given by its action,
/// by Lanczos with full reorthogonalization.
pub fn top_eigenvalue_lanczos(n: usize, apply: impl Fn(&[C64]) -> Vec<C64>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q: Vec<C64> = (0..n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
    let nq = vec_norm(&q);
    q.iter_mut().for_each(|z| *z /= nq);
    let mut basis: Vec<Vec<C64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    loop {
        let k = basis.len() - 1;
        let mut w = apply(&basis[k]);
        let alpha = inner(&basis[k], &w).re;
        alphas.push(alpha);
        for _ in 0..2 {
            for b in &basis {
                let c = inner(b, &w);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let beta = vec_norm(&w);
        let (theta, tail) = tridiagonal_top(&alphas, &betas);
        let scale = theta.abs().max(1e-300);
        if basis.len() == n || beta <= 1e-14 * scale || beta * tail.abs() <= 1e-13 * scale {
            return theta;
        }
        betas.push(beta);
        w.iter_mut().for_each(|z| *z /= beta);
        basis.push(w);
    }
}

/// Top eigenvalue of the symmetric tridiagonal matrix and the last component of its eigenvector.
fn tridiagonal_top(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let k = alphas.len();
    let t = CMatrix::from_fn(k, k, |i, j| {
        if i == j {
            C64::new(alphas[i], 0.0)
        } else if i + 1 == j {
            C64::new(betas[i], 0.0)
        } else if j + 1 == i {
            C64::new(betas[j], 0.0)
        } else {
            ZERO
        }
    });
    match hermitian_eig(&t) {
        Ok(e) => (e.values[k - 1], e.vectors[(k - 1, k - 1)].norm()),
        Err(_) => (f64::NAN, 0.0),
    }
}

/// Minimum-norm least-squares solution of `A x = b` through the pseudo-inverse
/// of the smaller Gram matrix. Returns `(x, numerical rank, residual norm)`.
pub fn least_squares(a: &CMatrix, b: &[C64], rel_cutoff: f64) -> Result<(Vec<C64>, usize, f64)> {
    if b.len() != a.rows() {
        return Err(Error::Dimension(format!("right-hand side of length {} for {} equations", b.len(), a.rows())));
    }
    let wide = a.cols() > a.rows();
    let gram = if wide { a.matmul(&a.adjoint()) } else { a.adjoint().matmul(a) }.hermitian_part();
    let eig = hermitian_eig(&gram)?;
    let top = eig.values.iter().fold(0.0f64, |m, &v| m.max(v));
    let cut = rel_cutoff * top;
    let rank = eig.values.iter().filter(|&&v| v > cut).count();
    let pinv: Vec<C64> = eig.values.iter().map(|&v| if v > cut { C64::new(1.0 / v, 0.0) } else { ZERO }).collect();
    let g_plus = eig.apply_values(&pinv);
    let x = if wide { a.adjoint_matvec(&g_plus.matvec(b)) } else { g_plus.matvec(&a.adjoint_matvec(b)) };
    let ax = a.matvec(&x);
    let residual = ax.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
    Ok((x, rank, residual))
}

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, mut t: Vec<(usize, usize, C64)>) -> SparseMatrix {
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(t.len());
        let mut vals: Vec<C64> = Vec::with_capacity(t.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *vals.last_mut().expect("nonempty") += v;
                continue;
            }
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            vals.push(v);
            last = Some((r, c));
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix { rows, cols, row_ptr, col_idx, vals }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec(&self, v: &[C64]) -> Vec<C64> {
        (0..self.rows)
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|k| self.vals[k] * v[self.col_idx[k]]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[k])] += self.vals[k];
            }
        }
        m
    }

    /// Gershgorin enclosure `[lo, hi]` of the spectrum of a Hermitian matrix.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.rows {
            let mut center = 0.0;
            let mut radius = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    center += self.vals[k].re;
                } else {
                    radius += self.vals[k].norm();
                }
            }
            lo = lo.min(center - radius);
            hi = hi.max(center + radius);
        }
        if self.rows == 0 {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }
}

/// Random Hermitian matrix with entries uniform in [−1, 1] (real and imaginary parts).
pub fn random_hermitian(n: usize, rng: &mut impl Rng) -> CMatrix {
    let m = random_matrix(n, n, rng);
    m.hermitian_part()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn identity_eigenvalues() {
        let e = hermitian_eig(&CMatrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        let u = &e.vectors;
        assert!(u.adjoint().matmul(u).max_abs_diff(&CMatrix::identity(3)) < 1e-14);
    }

    #[test]
    fn diagonal_sorted() {
        let e = hermitian_eig(&CMatrix::from_real_diag(&[2.0, -1.0])).unwrap();
        assert_eq!(e.values, vec![-1.0, 2.0]);
    }

    #[test]
    fn pauli_x() {
        let m = CMatrix::from_fn(2, 2, |i, j| if i != j { ONE } else { ZERO });
        let e = hermitian_eig(&m).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-15 && (e.values[1] - 1.0).abs() < 1e-15);
        let s = 1.0 / 2f64.sqrt();
        let v0 = e.vectors.column(0);
        // (1, −1)/√2 up to a phase
        let overlap = inner(&[C64::new(s, 0.0), C64::new(-s, 0.0)], &v0).norm();
        assert!((overlap - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_fn(2, 2, |i, j| if i < j { ONE } else { ZERO });
        assert!(matches!(hermitian_eig(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn reports_non_convergence() {
        let mut r = rng();
        let m = random_hermitian(12, &mut r);
        let tol = Tolerances { jacobi_max_sweeps: 1, ..Tolerances::default() };
        assert!(matches!(hermitian_eig_with(&m, &tol), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn complex_hermitian_reconstruction() {
        let mut r = rng();
        for n in [2, 5, 17, 40] {
            let m = random_hermitian(n, &mut r);
            let e = hermitian_eig(&m).unwrap();
            let lmax = e.values.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
            assert!(e.reconstruct().max_abs_diff(&m) <= 1e-9 * lmax);
            let u = &e.vectors;
            assert!(u.adjoint().matmul(u).max_abs_diff(&CMatrix::identity(n)) <= 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn deterministic() {
        let mut r = rng();
        let m = random_hermitian(9, &mut r);
        let a = hermitian_eig(&m).unwrap();
        let b = hermitian_eig(&m).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn function_examples() {
        let mut r = rng();
        let m = random_hermitian(6, &mut r);
        let id = matrix_function(&m, |x| C64::new(x, 0.0)).unwrap();
        assert!(id.max_abs_diff(&m) < 1e-10);
        let one = matrix_function(&m, |x| (I * 0.0 * x).exp()).unwrap();
        assert!(one.max_abs_diff(&CMatrix::identity(6)) < 1e-10);
        let d = CMatrix::from_real_diag(&[1.0, 2.0]);
        let res = matrix_function(&d, |x| ONE / (I + x)).unwrap();
        let expect = CMatrix::from_diag(&[ONE / (I + 1.0), ONE / (I + 2.0)]);
        assert!(res.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn function_domain_error() {
        let d = CMatrix::from_real_diag(&[0.0, 2.0]);
        match matrix_function(&d, |x| ONE / x) {
            Err(Error::Domain { eigenvalue }) => assert_eq!(eigenvalue, 0.0),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn shifted_solve_examples() {
        let x = solve_shifted(&CMatrix::zeros(1, 1), 1.0, &CMatrix::identity(1)).unwrap();
        assert!((x[(0, 0)] - C64::new(0.0, -1.0)).norm() < 1e-15);
        let x = solve_shifted(&CMatrix::from_real_diag(&[3.0]), 2.0, &CMatrix::identity(1)).unwrap();
        assert!((x[(0, 0)] - ONE / C64::new(3.0, 2.0)).norm() < 1e-15);
        assert!(solve_shifted(&CMatrix::zeros(1, 1), 0.0, &CMatrix::identity(1)).is_err());
    }

    #[test]
    fn shifted_solve_agrees_with_spectral_route() {
        let mut r = rng();
        let m = random_hermitian(4, &mut r);
        let b = random_matrix(4, 3, &mut r);
        let x = solve_shifted(&m, 0.7, &b).unwrap();
        let resid = &m.shift(C64::new(0.0, 0.7)).matmul(&x) - &b;
        assert!(resid.max_abs() <= 1e-10 * b.max_abs());
        let rinv = matrix_function(&m, |l| ONE / C64::new(l, 0.7)).unwrap();
        assert!(rinv.matmul(&b).max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn norm_examples() {
        assert!((operator_norm(&CMatrix::identity(7)) - 1.0).abs() < 1e-14);
        assert!((operator_norm(&CMatrix::from_real_diag(&[3.0, -5.0])) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn lanczos_matches_dense_norm() {
        let mut r = rng();
        for n in [100, 150] {
            let m = random_matrix(n, n, &mut r);
            let dense = hermitian_eig(&m.adjoint().matmul(&m).hermitian_part()).unwrap();
            let exact = dense.values.last().unwrap().sqrt();
            let lz = operator_norm(&m);
            assert!((lz - exact).abs() <= 1e-8 * exact, "n={n}: {lz} vs {exact}");
        }
    }

    #[test]
    fn lanczos_on_low_rank() {
        let mut r = rng();
        let u: Vec<C64> = (0..120).map(|_| C64::new(r.gen_range(-1.0..1.0), 0.0)).collect();
        let m = CMatrix::outer(&u, &u);
        let expect = vec_norm(&u).powi(2);
        assert!((operator_norm(&m) - expect).abs() <= 1e-10 * expect);
    }

    #[test]
    fn kron_and_blocks() {
        let a = CMatrix::from_real_diag(&[1.0, 2.0]);
        let b = CMatrix::identity(2);
        let k = a.kron(&b);
        assert_eq!(k.diag(), vec![ONE, ONE, C64::new(2.0, 0.0), C64::new(2.0, 0.0)]);
        let s = k.submatrix(2, 2, 2, 2);
        assert_eq!(s, CMatrix::identity(2).scale_real(2.0));
    }

    #[test]
    fn least_squares_min_norm() {
        let a = CMatrix::new(1, 2, vec![ONE, ONE]).unwrap();
        let (x, rank, res) = least_squares(&a, &[C64::new(2.0, 0.0)], 1e-12).unwrap();
        assert_eq!(rank, 1);
        assert!(res < 1e-14);
        assert!((x[0] - ONE).norm() < 1e-14 && (x[1] - ONE).norm() < 1e-14);
        let tall = CMatrix::new(3, 1, vec![ONE, ONE, ZERO]).unwrap();
        let (x, _, res) = least_squares(&tall, &[ONE, ZERO, ZERO], 1e-12).unwrap();
        assert!((x[0].re - 0.5).abs() < 1e-14);
        assert!((res - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn sparse_matches_dense() {
        let t = vec![(0, 0, ONE), (0, 1, I), (1, 0, -I), (1, 1, C64::new(2.0, 0.0)), (0, 0, ONE)];
        let s = SparseMatrix::from_triplets(2, 2, t);
        assert_eq!(s.nnz(), 4);
        let d = s.to_dense();
        assert_eq!(d[(0, 0)], C64::new(2.0, 0.0));
        let v = [ONE, I];
        assert_eq!(s.matvec(&v), d.matvec(&v));
        let (lo, hi) = s.gershgorin();
        let e = hermitian_eig(&d).unwrap();
        assert!(lo <= e.values[0] && e.values[1] <= hi);
    }
}
