//! Resolvents of truncated field operators, their ordered products, the mean
//! over the gauge group, truncated annihilators, matrix units and the
//! isometries `F_{f,κ}`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fock::{self, FockBasis, FullOperator};
use crate::lattice::WaveFn;
use crate::numkit::{self, CMatrix, C64, ONE, ZERO};

/// Ordered list of resolvent factors `R(λ_1,f_1)…R(λ_m,f_m)`.
#[derive(Clone, Debug)]
pub struct ResolventSpec {
    factors: Vec<(f64, WaveFn)>,
}

impl ResolventSpec {
    pub fn new(factors: Vec<(f64, WaveFn)>) -> Result<ResolventSpec> {
        if factors.is_empty() {
            return Err(Error::InvalidArgument("a monomial needs at least one resolvent".into()));
        }
        for (lambda, f) in &factors {
            check_factor(*lambda, f)?;
        }
        Ok(ResolventSpec { factors })
    }

    pub fn factors(&self) -> &[(f64, WaveFn)] {
        &self.factors
    }

    /// `Π 1/|λ_k|`, the a priori norm bound.
    pub fn norm_bound(&self) -> f64 {
        self.factors.iter().map(|(l, _)| 1.0 / l.abs()).product()
    }
}

fn check_factor(lambda: f64, f: &WaveFn) -> Result<()> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("resolvent parameter must be a nonzero real, got {lambda}")));
    }
    if f.norm() == 0.0 {
        return Err(Error::InvalidArgument("resolvent of the zero field".into()));
    }
    Ok(())
}

/// `R(λ,f) = (iλ + φ(f))^{−1}` on the truncated space.
pub fn resolvent(basis: &Arc<FockBasis>, lambda: f64, f: &WaveFn) -> Result<FullOperator> {
    check_factor(lambda, f)?;
    let phi = fock::field(basis, f)?;
    let r = numkit::solve_shifted(&phi.matrix, lambda, &CMatrix::identity(basis.dim()))?;
    FullOperator::new(basis.clone(), r)
}

pub fn monomial(basis: &Arc<FockBasis>, spec: &ResolventSpec) -> Result<FullOperator> {
    let mut acc: Option<FullOperator> = None;
    for (lambda, f) in spec.factors() {
        let r = resolvent(basis, *lambda, f)?;
        acc = Some(match acc {
            None => r,
            Some(m) => m.mul(&r),
        });
    }
    acc.ok_or_else(|| Error::InvalidArgument("empty monomial".into()))
}

/// Mean of `e^{itN} M e^{−itN}` over the circle, which on the truncated space
/// is exactly the block-diagonal part `Σ_n P_n M P_n`.
pub fn gauge_average(m: &FullOperator) -> FullOperator {
    let b = &m.basis;
    let mut out = CMatrix::zeros(b.dim(), b.dim());
    for n in 0..=b.nmax() {
        let o = b.sector_offset(n);
        out.set_block(o, o, &m.matrix.submatrix(o, o, b.sector_dim(n), b.sector_dim(n)));
    }
    FullOperator { basis: b.clone(), matrix: out, conserves_n: true }
}

/// Spectral projector of a Hermitian operator onto eigenvalues in `[lo, hi]`.
pub fn spectral_projector(m: &CMatrix, lo: f64, hi: f64) -> Result<CMatrix> {
    let eig = numkit::hermitian_eig(&m.hermitian_part())?;
    eig.apply(|x| if x >= lo && x <= hi { ONE } else { ZERO })
}

/// `prefactor · E_{[0,n]}(N(f)) a(f)`; pass `n^{−1/2}` or `1` as the prefactor.
pub fn truncated_annihilator(basis: &Arc<FockBasis>, f: &WaveFn, n: usize, prefactor: f64) -> Result<FullOperator> {
    if !f.is_normalized() {
        return Err(Error::InvalidArgument(format!("function must be normalized, norm is {}", f.norm())));
    }
    truncated_annihilator_coeffs(basis, &f.mode_coeffs(), n, prefactor)
}

fn truncated_annihilator_coeffs(basis: &Arc<FockBasis>, c: &[C64], n: usize, prefactor: f64) -> Result<FullOperator> {
    if n > basis.nmax() {
        return Err(Error::InvalidArgument(format!("level {n} above cutoff {}", basis.nmax())));
    }
    let a = annihilator_from_coeffs(basis, c)?;
    let number = a.adjoint().matmul(&a);
    let e = spectral_projector(&number, -0.5, n as f64 + 0.5)?;
    FullOperator::new(basis.clone(), e.matmul(&a).scale_real(prefactor))
}

fn annihilator_from_coeffs(basis: &Arc<FockBasis>, c: &[C64]) -> Result<CMatrix> {
    basis.check_dense(basis.dim())?;
    let mut a = CMatrix::zeros(basis.dim(), basis.dim());
    for m in 1..=basis.nmax() {
        for i in 0..basis.sector_dim(m) {
            let mut e = vec![ZERO; basis.sector_dim(m)];
            e[i] = ONE;
            let col = basis.annihilate_sector(c, m, &e)?;
            for (r, z) in col.into_iter().enumerate() {
                a[(basis.sector_offset(m - 1) + r, basis.sector_offset(m) + i)] = z;
            }
        }
    }
    Ok(a)
}

fn unit_coeffs(d: usize, j: usize) -> Vec<C64> {
    let mut c = vec![ZERO; d];
    c[j] = ONE;
    c
}

/// `W_n(i,k) = X_n(L_i)* X_n(L_k)` with `X_n(L_j) = n^{−1/2} E_{[0,n]}(N_j) a_j`.
/// Mode indices are zero-based. On `F_n` this is `M_{ik} ⊗_s 1^{⊗(n−1)}`.
pub fn matrix_unit(basis: &Arc<FockBasis>, i: usize, k: usize, n: usize) -> Result<FullOperator> {
    let d = basis.d();
    if i >= d || k >= d {
        return Err(Error::InvalidArgument(format!("mode index out of range for {d} modes")));
    }
    if n == 0 || n > basis.nmax() {
        return Err(Error::InvalidArgument(format!("level {n} must lie in 1..={}", basis.nmax())));
    }
    let pre = 1.0 / (n as f64).sqrt();
    let xi = truncated_annihilator_coeffs(basis, &unit_coeffs(d, i), n, pre)?;
    let xk = truncated_annihilator_coeffs(basis, &unit_coeffs(d, k), n, pre)?;
    FullOperator::new(basis.clone(), xi.matrix.adjoint().matmul(&xk.matrix))
}

/// Residual threshold for the composite matrix-unit fit.
pub const COMPOSITE_TOL: f64 = 1e-9;

/// Operator whose restriction to `F_n` is `M_{i₁k₁} ⊗_s … ⊗_s M_{i_mk_m} ⊗_s 1^{⊗(n−m)}`,
/// built as a combination of products of at most `m` matrix units `W_n(i_a,k_b)`.
/// The coefficients cancel the lower tensor orders and are fitted by least squares.
pub fn matrix_unit_composite(basis: &Arc<FockBasis>, is: &[usize], ks: &[usize], n: usize) -> Result<FullOperator> {
    let m = is.len();
    if m == 0 || ks.len() != m {
        return Err(Error::InvalidArgument("composite needs equally many nonzero row and column indices".into()));
    }
    if m > n {
        return Err(Error::InvalidArgument(format!("{m} factors do not fit into level {n}")));
    }
    let d = basis.d();
    let target = fock::symmetric_embed(
        basis,
        &fock::EmbedInput::Factors(is.iter().zip(ks).map(|(&i, &k)| fock::one_body_unit(d, i, k)).collect()),
        n,
    )?;
    let mut letters = Vec::with_capacity(m * m);
    for &i in is {
        for &k in ks {
            letters.push(matrix_unit(basis, i, k, n)?);
        }
    }
    let mut words: Vec<FullOperator> = letters.clone();
    let mut layer = letters.clone();
    for _ in 1..m {
        let mut next = Vec::with_capacity(layer.len() * letters.len());
        for w in &layer {
            for l in &letters {
                next.push(w.mul(l));
            }
        }
        words.extend(next.iter().cloned());
        layer = next;
    }
    let (o, s) = (basis.sector_offset(n), basis.sector_dim(n));
    let system = CMatrix::from_fn(s * s, words.len(), |r, c| words[c].matrix[(o + r / s, o + r % s)]);
    let (x, rank, residual) = numkit::least_squares(&system, target.block.data(), 1e-12)?;
    let scale = target.block.frobenius_norm().max(1.0);
    if residual > COMPOSITE_TOL * scale {
        return Err(Error::RankDeficient { rank, size: words.len(), residual });
    }
    let mut out = CMatrix::zeros(basis.dim(), basis.dim());
    for (w, c) in words.iter().zip(x) {
        if c != ZERO {
            out += &w.matrix.scale(c);
        }
    }
    FullOperator::new(basis.clone(), out)
}

/// Exponent of `(1 + a*(f)a(f))^{−κ}` in `F_{f,κ}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kappa {
    Half,
    Value(f64),
}

impl Kappa {
    pub fn value(self) -> f64 {
        match self {
            Kappa::Half => 0.5,
            Kappa::Value(k) => k,
        }
    }
}

/// `F_{f,κ} = a*(f)(1 + a*(f)a(f))^{−κ}`; isometric below the cutoff for `κ = 1/2`.
pub fn isometry_f(basis: &Arc<FockBasis>, f: &WaveFn, kappa: Kappa) -> Result<FullOperator> {
    if !f.is_normalized() {
        return Err(Error::InvalidArgument(format!("function must be normalized, norm is {}", f.norm())));
    }
    let k = kappa.value();
    if !(k >= 0.5) {
        return Err(Error::InvalidArgument(format!("κ must be at least 1/2, got {k}")));
    }
    let a_star = fock::creation(basis, f)?;
    let number = a_star.matrix.matmul(&a_star.matrix.adjoint());
    let damp = numkit::matrix_function(&number.hermitian_part(), |x| {
        let base = (1.0 + x).max(0.0);
        C64::new(if kappa == Kappa::Half { 1.0 / base.sqrt() } else { base.powf(-k) }, 0.0)
    })?;
    FullOperator::new(basis.clone(), a_star.matrix.matmul(&damp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{enumerate_basis, symmetric_embed, EmbedInput};
    use crate::lattice::{wave_packet, Grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(d: usize, nmax: usize) -> (Grid, Arc<FockBasis>) {
        (Grid::periodic(d, 0.5).unwrap(), enumerate_basis(d, nmax).unwrap())
    }

    fn random_wave(g: Grid, rng: &mut impl Rng) -> WaveFn {
        WaveFn::new(g, (0..g.d).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()).unwrap()
    }

    fn sector_block(op: &FullOperator, n: usize) -> CMatrix {
        op.block(n, n)
    }

    #[test]
    fn resolvent_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (g, b) = setup(3, 3);
        let f = random_wave(g, &mut rng);
        let r = resolvent(&b, 0.7, &f).unwrap();
        let phi = fock::field(&b, &f).unwrap();
        let lhs = r.matrix.matmul(&phi.matrix.shift(C64::new(0.0, 0.7)));
        assert!(lhs.max_abs_diff(&CMatrix::identity(b.dim())) < 1e-10);
        let rm = resolvent(&b, -0.7, &f).unwrap();
        assert!(r.adjoint().matrix.max_abs_diff(&rm.matrix) < 1e-12);
        let (l, mu) = (0.7, -1.3);
        let rmu = resolvent(&b, mu, &f).unwrap();
        let diff = &r.matrix - &rmu.matrix;
        let want = r.matrix.matmul(&rmu.matrix).scale(C64::new(0.0, mu - l));
        assert!(diff.max_abs_diff(&want) < 1e-10);
        assert!(r.norm() <= 1.0 / 0.7 + 1e-10);
        assert!(resolvent(&b, 0.0, &f).is_err());
    }

    #[test]
    fn gauge_covariance_of_resolvent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (g, b) = setup(3, 3);
        let f = random_wave(g, &mut rng);
        let t = 0.9;
        let u = fock::gauge_unitary(&b, t).unwrap();
        let lhs = u.mul(&resolvent(&b, 1.1, &f).unwrap()).mul(&u.adjoint());
        let rhs = resolvent(&b, 1.1, &f.scale(C64::from_polar(1.0, t))).unwrap();
        assert!(lhs.matrix.max_abs_diff(&rhs.matrix) < 1e-10);
    }

    #[test]
    fn commutator_with_creation_converges_in_cutoff() {
        // [R(λ,f), a*(g)] = −⟨f,g⟩ R(λ,f)², exact up to the top-sector truncation
        let g = Grid::periodic(2, 1.0).unwrap();
        let f = WaveFn::mode(g, 0).add(&WaveFn::mode(g, 1).scale(C64::new(0.0, 0.5)));
        let h = WaveFn::mode(g, 0);
        let mut residuals = Vec::new();
        for nmax in [4, 6, 8, 12] {
            let b = enumerate_basis(2, nmax).unwrap();
            let r = resolvent(&b, 2.0, &f).unwrap();
            let c = r.commutator(&fock::creation(&b, &h).unwrap());
            let want = r.mul(&r).scale(-f.inner(&h));
            let vac = b.embed_sector_vector(0, &[ONE]);
            let res = c.sub(&want).apply(&vac);
            residuals.push(numkit::vec_norm(&res));
        }
        assert!(residuals.windows(2).all(|w| w[1] < w[0]), "{residuals:?}");
        assert!(residuals[3] < 0.25 * residuals[0], "{residuals:?}");
    }

    #[test]
    fn monomial_bound_and_single_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (g, b) = setup(3, 3);
        let f1 = random_wave(g, &mut rng);
        let f2 = random_wave(g, &mut rng);
        let single = ResolventSpec::new(vec![(0.8, f1.clone())]).unwrap();
        assert!(monomial(&b, &single).unwrap().matrix.max_abs_diff(&resolvent(&b, 0.8, &f1).unwrap().matrix) < 1e-15);
        let spec = ResolventSpec::new(vec![(0.8, f1), (-1.5, f2)]).unwrap();
        let m = monomial(&b, &spec).unwrap();
        assert!(m.norm() <= spec.norm_bound() + 1e-10);
        assert!(ResolventSpec::new(vec![]).is_err());
    }

    #[test]
    fn gauge_average_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (g, b) = setup(2, 3);
        let f = random_wave(g, &mut rng);
        let h = random_wave(g, &mut rng);
        let a = fock::creation(&b, &f).unwrap();
        assert_eq!(gauge_average(&a).matrix.max_abs(), 0.0);
        let inv = a.mul(&fock::annihilation(&b, &h).unwrap());
        assert!(gauge_average(&inv).matrix.max_abs_diff(&inv.matrix) < 1e-15);
    }

    #[test]
    fn gauge_average_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (g, b) = setup(2, 3);
        let spec = ResolventSpec::new(vec![(0.6, random_wave(g, &mut rng)), (-0.9, random_wave(g, &mut rng))]).unwrap();
        let m = monomial(&b, &spec).unwrap();
        let nodes = 4 * b.nmax() + 1;
        let mut q = CMatrix::zeros(b.dim(), b.dim());
        for j in 0..nodes {
            let t = 2.0 * std::f64::consts::PI * j as f64 / nodes as f64;
            let u = fock::gauge_unitary(&b, t).unwrap();
            q += &u.mul(&m).mul(&u.adjoint()).matrix;
        }
        let q = q.scale_real(1.0 / nodes as f64);
        let avg = gauge_average(&m);
        assert!(q.max_abs_diff(&avg.matrix) < 1e-12);
        assert!(avg.norm() <= m.norm() + 1e-12);
        assert!(gauge_average(&avg).matrix.max_abs_diff(&avg.matrix) == 0.0);
        let n = fock::global_number(&b).unwrap();
        assert!(avg.commutator(&n).matrix.max_abs() < 1e-12);
    }

    #[test]
    fn averaged_monomial_preserves_span_fock_space() {
        // f in span of modes {0,1}: the averaged monomial maps F(L) into itself
        let (g, b) = setup(3, 3);
        let f1 = WaveFn::mode(g, 0).add(&WaveFn::mode(g, 1).scale(C64::new(0.3, -0.4)));
        let f2 = WaveFn::mode(g, 1);
        let m = gauge_average(&monomial(&b, &ResolventSpec::new(vec![(0.7, f1), (1.2, f2)]).unwrap()).unwrap());
        let in_l: Vec<bool> = (0..b.dim()).map(|i| b.occupation(i)[2] == 0).collect();
        let mut leak = 0.0f64;
        for r in 0..b.dim() {
            for c in 0..b.dim() {
                if in_l[c] && !in_l[r] {
                    leak = leak.max(m.matrix[(r, c)].norm());
                }
            }
        }
        assert!(leak < 1e-12);
    }

    #[test]
    fn averaged_resolvent_sector_norms_decay() {
        let b = enumerate_basis(1, 16).unwrap();
        // single mode: φ = a + a*, sector blocks are the diagonal entries of R
        let phi = {
            let mut m = CMatrix::zeros(b.dim(), b.dim());
            for k in 0..b.nmax() {
                let s = ((k + 1) as f64).sqrt();
                m[(k + 1, k)] = C64::new(s, 0.0);
                m[(k, k + 1)] = C64::new(s, 0.0);
            }
            m
        };
        let r = numkit::solve_shifted(&phi, 0.8, &CMatrix::identity(b.dim())).unwrap();
        let norms: Vec<f64> = (0..=8).map(|k| r[(k, k)].norm()).collect();
        for w in norms.windows(3).step_by(2) {
            assert!(w[2] < w[0], "{norms:?}");
        }
        assert!(norms[8] < 0.6 * norms[0]);
    }

    #[test]
    fn truncated_annihilator_properties() {
        let (g, b) = setup(2, 4);
        let f = WaveFn::mode(g, 0).add(&WaveFn::mode(g, 1)).normalized().unwrap();
        for n in 0..=3 {
            let x = truncated_annihilator(&b, &f, n, 1.0).unwrap();
            let vac = b.embed_sector_vector(0, &[ONE]);
            assert!(numkit::vec_norm(&x.apply(&vac)) < 1e-14);
            // projector oracle: Lagrange polynomial in the integer-spectrum N(f)
            let a = fock::annihilation(&b, &f).unwrap();
            let nf = a.adjoint().mul(&a).matrix;
            let mut proj = CMatrix::zeros(b.dim(), b.dim());
            for j in 0..=n {
                let mut term = CMatrix::identity(b.dim());
                for k in 0..=b.nmax() {
                    if k != j {
                        term = term.matmul(&nf.shift(C64::new(-(k as f64), 0.0))).scale_real(1.0 / (j as f64 - k as f64));
                    }
                }
                proj += &term;
            }
            assert!(x.matrix.max_abs_diff(&proj.matmul(&a.matrix)) < 1e-10);
            let xx = x.adjoint().mul(&x);
            assert!(xx.conserves_n);
        }
        assert!(truncated_annihilator(&b, &f.scale(C64::new(2.0, 0.0)), 1, 1.0).is_err());
    }

    #[test]
    fn matrix_unit_single_particle_and_pair() {
        let b = enumerate_basis(2, 3).unwrap();
        for i in 0..2 {
            for k in 0..2 {
                let w = matrix_unit(&b, i, k, 1).unwrap();
                assert!(sector_block(&w, 1).max_abs_diff(&fock::one_body_unit(2, i, k)) < 1e-12);
            }
        }
        let w = matrix_unit(&b, 0, 1, 2).unwrap();
        let e = symmetric_embed(&b, &EmbedInput::Factors(vec![fock::one_body_unit(2, 0, 1)]), 2).unwrap();
        assert!(sector_block(&w, 2).max_abs_diff(&e.block) < 1e-10);
    }

    #[test]
    fn composite_units_fit() {
        for d in 1..=3 {
            let b = enumerate_basis(d, 3).unwrap();
            for n in 2..=3 {
                for (i1, k1, i2, k2) in [(0, 0, 0, 0), (0, d - 1, d - 1, 0), (d - 1, 0, 0, d - 1)] {
                    let w = matrix_unit_composite(&b, &[i1, i2], &[k1, k2], n).unwrap();
                    // independent right-hand side: permutation average of the tensor factors
                    let mut m = fock::one_body_unit(d, i1, k1).kron(&fock::one_body_unit(d, i2, k2));
                    m = m.kron(&CMatrix::identity(d.pow(n as u32 - 2)));
                    let mut perms = Vec::new();
                    fock::permutations(&mut (0..n).collect(), 0, &mut perms);
                    let mut avg = CMatrix::zeros(m.rows(), m.cols());
                    for p in &perms {
                        let u = fock::permutation_unitary(d, p);
                        avg += &u.matmul(&m).matmul(&u.adjoint());
                    }
                    let s = fock::symmetrizer(&b, n).unwrap();
                    let want = s.adjoint().matmul(&avg.scale_real(1.0 / perms.len() as f64)).matmul(&s);
                    assert!(sector_block(&w, n).max_abs_diff(&want) < 1e-9, "d={d} n={n}");
                }
            }
        }
    }

    #[test]
    fn composite_matches_closed_form_for_pairs() {
        // M⊗_sM⊗_s1 on F_n = n/(n−1) W W − δ/(n−1) W
        let b = enumerate_basis(3, 3).unwrap();
        let n = 3;
        let (i1, k1, i2, k2) = (0, 1, 1, 2);
        let w = matrix_unit_composite(&b, &[i1, i2], &[k1, k2], n).unwrap();
        let w1 = matrix_unit(&b, i1, k1, n).unwrap();
        let w2 = matrix_unit(&b, i2, k2, n).unwrap();
        let w12 = matrix_unit(&b, i1, k2, n).unwrap();
        let nf = n as f64;
        let closed = &w1.mul(&w2).matrix.scale_real(nf / (nf - 1.0)) - &w12.matrix.scale_real(1.0 / (nf - 1.0));
        assert!(sector_block(&w, n).max_abs_diff(&closed.submatrix(b.sector_offset(n), b.sector_offset(n), 10, 10)) < 1e-9);
    }

    #[test]
    fn composite_rejects_bad_shapes() {
        let b = enumerate_basis(2, 3).unwrap();
        assert!(matrix_unit_composite(&b, &[0, 1, 0], &[0, 1, 0], 2).is_err());
        assert!(matrix_unit_composite(&b, &[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn isometry_properties() {
        let g = Grid::periodic(3, 0.5).unwrap();
        let b = enumerate_basis(3, 4).unwrap();
        let f = wave_packet(&g, 0.0, 0.4, 0.3, None).unwrap();
        let ff = isometry_f(&b, &f, Kappa::Half).unwrap();
        let vac = b.embed_sector_vector(0, &[ONE]);
        let one = b.embed_sector_vector(1, &b.create_sector(&f.mode_coeffs(), 0, &[ONE]).unwrap());
        let got = ff.apply(&vac);
        assert!(got.iter().zip(&one).all(|(x, y)| (x - y).norm() < 1e-14));
        let ftf = ff.adjoint().mul(&ff);
        for n in 0..b.nmax() {
            assert!(ftf.block(n, n).max_abs_diff(&CMatrix::identity(b.sector_dim(n))) < 1e-10);
        }
        let mut last = f64::INFINITY;
        for k in [2.0, 1.0, 0.75, 0.5] {
            let fk = isometry_f(&b, &f, Kappa::Value(k)).unwrap();
            let r = fk.matrix.max_abs_diff(&ff.matrix);
            assert!(r <= last);
            last = r;
        }
        assert!(last < 1e-12);
        assert!(isometry_f(&b, &f, Kappa::Value(0.3)).is_err());
    }
}
