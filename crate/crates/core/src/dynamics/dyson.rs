//! Dyson expansion of the cocycle `γ(t)(C) = Γ(t) C Γ(t)*`, `Γ(t) = e^{itH₀}e^{−itH}`,
//! as `C + Σ_l D_l(t)` with `D_{l+1}(t) = ∫₀ᵗ ds δ(s)(D_l(s))` and
//! `δ(s)(B) = i[B, 𝑽(s)]`.

use crate::error::{Error, Result};
use crate::fock::{FockBasis, SectorOperator};
use crate::numkit::{self, CMatrix, C64};

use super::{sector_hamiltonian_sparse, sector_interaction_diag, HamiltonianSpec};

/// Relative quadrature tolerance used in the tail certificate.
pub const QUAD_TOL_REL: f64 = 1e-8;
pub const MAX_NODES: usize = 4096;
const START_STEPS: usize = 8;

#[derive(Clone, Debug)]
pub struct DysonTerm {
    pub order: usize,
    pub value: SectorOperator,
    pub steps: usize,
    /// `2^l|t|^l/l!·‖𝑽_n‖^l·‖C‖`.
    pub bound: f64,
}

#[derive(Clone, Debug)]
pub struct DysonResult {
    pub n: usize,
    pub t: f64,
    pub c: SectorOperator,
    pub terms: Vec<DysonTerm>,
    pub steps: usize,
    pub cauchy_gap: f64,
    pub v_norm: f64,
    pub c_norm: f64,
}

impl DysonResult {
    /// `C + Σ_{l ≤ order} D_l(t)`.
    pub fn partial_sum(&self, order: usize) -> SectorOperator {
        let mut block = self.c.block.clone();
        for term in self.terms.iter().take(order) {
            block += &term.value.block;
        }
        SectorOperator { n: self.n, block }
    }

    pub fn tail(&self, order: usize) -> f64 {
        tail_bound(2.0 * self.t.abs() * self.v_norm, order, self.c_norm)
    }
}

/// `‖C‖ Σ_{l>order} x^l/l!`.
pub fn tail_bound(x: f64, order: usize, c_norm: f64) -> f64 {
    let mut term = 1.0;
    for l in 1..=order {
        term *= x / l as f64;
    }
    let mut sum = 0.0;
    let mut l = order;
    loop {
        l += 1;
        term *= x / l as f64;
        sum += term;
        if term <= 1e-18 * sum || term == 0.0 || l > order + 400 {
            break;
        }
    }
    sum * c_norm
}

/// Interaction picture of `𝑽_n` in the eigenbasis of `H₀ₙ`.
pub struct InteractionPicture {
    pub n: usize,
    energies: Vec<f64>,
    u0: CMatrix,
    v: CMatrix,
    pub v_norm: f64,
}

impl InteractionPicture {
    pub fn new(spec: &HamiltonianSpec, basis: &FockBasis, n: usize) -> Result<InteractionPicture> {
        basis.check_dense(basis.sector_dim(n))?;
        let h0 = sector_hamiltonian_sparse(&spec.without_interaction(), basis, n)?.to_dense();
        let eig = numkit::hermitian_eig(&h0)?;
        let vdiag = sector_interaction_diag(spec, basis, n)?;
        let v_norm = vdiag.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let u0 = eig.vectors;
        let vd = CMatrix::from_real_diag(&vdiag);
        let v = u0.adjoint().matmul(&vd).matmul(&u0).hermitian_part();
        Ok(InteractionPicture { n, energies: eig.values, u0, v, v_norm })
    }

    pub fn to_eigenbasis(&self, c: &CMatrix) -> CMatrix {
        self.u0.adjoint().matmul(c).matmul(&self.u0)
    }

    pub fn from_eigenbasis(&self, c: &CMatrix) -> CMatrix {
        self.u0.matmul(c).matmul(&self.u0.adjoint())
    }

    /// `𝑽(s) = e^{isH₀} 𝑽 e^{−isH₀}` in the eigenbasis.
    pub fn v_at(&self, s: f64) -> CMatrix {
        let e = &self.energies;
        CMatrix::from_fn(e.len(), e.len(), |a, b| self.v[(a, b)] * C64::from_polar(1.0, s * (e[a] - e[b])))
    }

    fn delta(&self, s: f64, b: &CMatrix) -> CMatrix {
        let v = self.v_at(s);
        (&b.matmul(&v) - &v.matmul(b)).scale(C64::new(0.0, 1.0))
    }

    /// `D_1(t) … D_order(t)` in the eigenbasis with `steps` Simpson intervals.
    pub fn terms(&self, c: &CMatrix, t: f64, order: usize, steps: usize, budget: u64) -> Result<Vec<CMatrix>> {
        if steps < 2 || steps % 2 != 0 {
            return Err(Error::InvalidArgument(format!("Simpson needs an even number of steps, got {steps}")));
        }
        let dim = c.rows() as u64;
        let required = 2 * (steps as u64 + 1) * dim * dim * 16;
        if required > budget {
            return Err(Error::Budget { required, budget });
        }
        let h = t / steps as f64;
        let nodes: Vec<f64> = (0..=steps).map(|j| j as f64 * h).collect();
        let mut prev: Vec<CMatrix> = vec![c.clone(); steps + 1];
        let mut out = Vec::with_capacity(order);
        for _ in 0..order {
            let f: Vec<CMatrix> = nodes.iter().zip(&prev).map(|(&s, d)| self.delta(s, d)).collect();
            let mut next = Vec::with_capacity(steps + 1);
            next.push(CMatrix::zeros(c.rows(), c.cols()));
            let mut j = 0;
            while j < steps {
                let base = next[j].clone();
                let half = &(&f[j].scale_real(5.0) + &f[j + 1].scale_real(8.0)) - &f[j + 2];
                next.push(&base + &half.scale_real(h / 12.0));
                let full = &(&f[j] + &f[j + 1].scale_real(4.0)) + &f[j + 2];
                next.push(&base + &full.scale_real(h / 3.0));
                j += 2;
            }
            out.push(next[steps].clone());
            prev = next;
        }
        Ok(out)
    }
}

fn check_c(basis: &FockBasis, n: usize, c: &SectorOperator) -> Result<()> {
    if c.n != n || c.dim() != basis.sector_dim(n) {
        return Err(Error::Dimension(format!("operator on level {} for a level-{n} expansion", c.n)));
    }
    Ok(())
}

/// A single order `D_l(t)(C)` at a fixed number of Simpson steps.
pub fn dyson_term(spec: &HamiltonianSpec, basis: &FockBasis, n: usize, c: &SectorOperator, t: f64, l: usize, steps: usize) -> Result<DysonTerm> {
    check_c(basis, n, c)?;
    if l == 0 {
        return Err(Error::InvalidArgument("Dyson orders start at 1".into()));
    }
    if steps < 4 {
        return Err(Error::InvalidArgument(format!("at least 4 steps required, got {steps}")));
    }
    let ip = InteractionPicture::new(spec, basis, n)?;
    let ce = ip.to_eigenbasis(&c.block);
    let d = ip.terms(&ce, t, l, steps + steps % 2, basis.budget())?;
    let c_norm = c.norm();
    Ok(DysonTerm {
        order: l,
        value: SectorOperator { n, block: ip.from_eigenbasis(&d[l - 1]) },
        steps,
        bound: term_bound(l, t, ip.v_norm, c_norm),
    })
}

fn term_bound(l: usize, t: f64, v_norm: f64, c_norm: f64) -> f64 {
    let x = 2.0 * t.abs() * v_norm;
    (1..=l).fold(c_norm, |acc, k| acc * x / k as f64)
}

/// Dyson sum up to `order` with step doubling until the Cauchy gap between
/// successive refinements is below `quad_tol`.
pub fn dyson_cocycle(spec: &HamiltonianSpec, basis: &FockBasis, n: usize, c: &SectorOperator, t: f64, order: usize, quad_tol: f64) -> Result<DysonResult> {
    check_c(basis, n, c)?;
    let ip = InteractionPicture::new(spec, basis, n)?;
    let c_norm = c.norm();
    let ce = ip.to_eigenbasis(&c.block);
    let finish = |terms: Vec<CMatrix>, steps: usize, gap: f64| DysonResult {
        n,
        t,
        c: c.clone(),
        terms: terms
            .into_iter()
            .enumerate()
            .map(|(k, m)| DysonTerm {
                order: k + 1,
                value: SectorOperator { n, block: ip.from_eigenbasis(&m) },
                steps,
                bound: term_bound(k + 1, t, ip.v_norm, c_norm),
            })
            .collect(),
        steps,
        cauchy_gap: gap,
        v_norm: ip.v_norm,
        c_norm,
    };
    if order == 0 || t == 0.0 {
        return Ok(finish(vec![CMatrix::zeros(ce.rows(), ce.cols()); order], 0, 0.0));
    }
    let mut steps = START_STEPS;
    let mut coarse = ip.terms(&ce, t, order, steps, basis.budget())?;
    loop {
        let fine = ip.terms(&ce, t, order, 2 * steps, basis.budget())?;
        let gap = coarse.iter().zip(&fine).map(|(a, b)| (a - b).frobenius_norm()).fold(0.0f64, f64::max);
        steps *= 2;
        if gap <= quad_tol {
            return Ok(finish(fine, steps, gap));
        }
        if steps >= MAX_NODES {
            return Err(Error::Quadrature { gap, nodes: steps + 1 });
        }
        coarse = fine;
    }
}

/// Exact `γ(t)(C) = e^{itH₀} e^{−itH} C e^{itH} e^{−itH₀}` by diagonalization.
pub fn exact_cocycle(spec: &HamiltonianSpec, basis: &FockBasis, n: usize, c: &SectorOperator, t: f64) -> Result<SectorOperator> {
    check_c(basis, n, c)?;
    let h = numkit::hermitian_eig(&sector_hamiltonian_sparse(spec, basis, n)?.to_dense())?;
    let h0 = numkit::hermitian_eig(&sector_hamiltonian_sparse(&spec.without_interaction(), basis, n)?.to_dense())?;
    let u = h.apply(|x| C64::from_polar(1.0, -t * x))?;
    let u0 = h0.apply(|x| C64::from_polar(1.0, t * x))?;
    let gamma = u0.matmul(&u);
    Ok(SectorOperator { n, block: gamma.matmul(&c.block).matmul(&gamma.adjoint()) })
}
