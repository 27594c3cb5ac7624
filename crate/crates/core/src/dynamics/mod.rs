//! Lattice Hamiltonians for pair-interacting bosons, optionally in a harmonic
//! trap, with sector-wise time evolution.

mod asymptotic;
mod dyson;
mod mehler;

pub use asymptotic::*;
pub use dyson::*;
pub use mehler::*;

use std::hash::{Hash, Hasher};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, FockBasis, FullOperator, SectorOperator};
use crate::lattice::{laplacian, Grid, PairTable};
use crate::numkit::{self, CMatrix, EigenDecomposition, SparseMatrix, C64, ONE, ZERO};
use crate::structure::Evolution;

/// Harmonic confinement `x²/L⁴`, or none.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trap {
    Infinite,
    Finite(f64),
}

impl Trap {
    pub fn finite(l: f64) -> Result<Trap> {
        if l > 0.0 && l.is_finite() {
            Ok(Trap::Finite(l))
        } else {
            Err(Error::InvalidArgument(format!("trap length must be positive, got {l}")))
        }
    }

    /// Coefficient of `x²`.
    pub fn coefficient(&self) -> f64 {
        match *self {
            Trap::Infinite => 0.0,
            Trap::Finite(l) => 1.0 / l.powi(4),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSpec {
    pub grid: Grid,
    pub pair: PairTable,
    pub trap: Trap,
    /// Coefficient of `N` added to the Hamiltonian.
    pub chemical_shift: f64,
}

impl HamiltonianSpec {
    pub fn new(grid: Grid, pair: PairTable, trap: Trap, chemical_shift: f64) -> Result<HamiltonianSpec> {
        if pair.d != grid.d {
            return Err(Error::Dimension(format!("pair table for {} sites on a {}-site grid", pair.d, grid.d)));
        }
        for j in 0..grid.d {
            for k in 0..j {
                if pair.get(j, k) != pair.get(k, j) {
                    return Err(Error::InvalidArgument("pair table is not symmetric".into()));
                }
            }
        }
        if let Trap::Finite(l) = trap {
            Trap::finite(l)?;
        }
        Ok(HamiltonianSpec { grid, pair, trap, chemical_shift })
    }

    pub fn free(grid: Grid) -> HamiltonianSpec {
        HamiltonianSpec { grid, pair: PairTable::zero(grid.d), trap: Trap::Infinite, chemical_shift: 0.0 }
    }

    pub fn with_trap(&self, trap: Trap) -> HamiltonianSpec {
        HamiltonianSpec { trap, ..self.clone() }
    }

    pub fn without_interaction(&self) -> HamiltonianSpec {
        HamiltonianSpec { pair: PairTable::zero(self.grid.d), ..self.clone() }
    }

    /// `−Δ + x²/L⁴ + μ` on one particle.
    pub fn one_body(&self) -> CMatrix {
        let mut h = laplacian(&self.grid);
        let k = self.trap.coefficient();
        for (j, x) in self.grid.positions().into_iter().enumerate() {
            h[(j, j)] += C64::new(k * x * x + self.chemical_shift, 0.0);
        }
        h
    }

    /// A priori bound `n(n−1)·max|V|` on the interaction in sector `n`.
    pub fn interaction_bound(&self, n: usize) -> f64 {
        (n * n.saturating_sub(1)) as f64 * self.pair.max_abs()
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.grid.d.hash(&mut h);
        self.grid.h.to_bits().hash(&mut h);
        self.grid.periodic.hash(&mut h);
        for j in 0..self.grid.d {
            for k in 0..self.grid.d {
                self.pair.get(j, k).to_bits().hash(&mut h);
            }
        }
        match self.trap {
            Trap::Infinite => 0u64.hash(&mut h),
            Trap::Finite(l) => l.to_bits().hash(&mut h),
        }
        self.chemical_shift.to_bits().hash(&mut h);
        h.finish()
    }
}

fn check_sector(basis: &FockBasis, spec: &HamiltonianSpec, n: usize) -> Result<()> {
    if basis.d() != spec.grid.d {
        return Err(Error::Dimension(format!("{}-mode basis for a {}-site grid", basis.d(), spec.grid.d)));
    }
    if n > basis.nmax() {
        return Err(Error::InvalidArgument(format!("sector {n} above cutoff {}", basis.nmax())));
    }
    Ok(())
}

/// Pair interaction `Σ_{a,b} T_ab n_a n_b − Σ_a T_aa n_a` of one occupation.
pub fn pair_energy(pair: &PairTable, occ: &[u8]) -> f64 {
    let mut e = 0.0;
    for (a, &na) in occ.iter().enumerate() {
        if na == 0 {
            continue;
        }
        let na = na as f64;
        for (b, &nb) in occ.iter().enumerate() {
            if nb != 0 {
                e += pair.get(a, b) * na * nb as f64;
            }
        }
        e -= pair.get(a, a) * na;
    }
    e
}

/// Second-quantized `H_n` in the occupation basis of sector `n`.
pub fn sector_hamiltonian_sparse(spec: &HamiltonianSpec, basis: &FockBasis, n: usize) -> Result<SparseMatrix> {
    check_sector(basis, spec, n)?;
    let d = basis.d();
    let h1 = spec.one_body();
    let hops: Vec<Vec<(usize, C64)>> =
        (0..d).map(|b| (0..d).filter(|&a| a != b && h1[(a, b)] != ZERO).map(|a| (a, h1[(a, b)])).collect()).collect();
    let dim = basis.sector_dim(n);
    let mut trip = Vec::with_capacity(dim * 5);
    let mut occ = vec![0u8; d];
    for i in 0..dim {
        occ.copy_from_slice(basis.sector_occupation(n, i));
        let mut diag = pair_energy(&spec.pair, &occ);
        for (a, &na) in occ.iter().enumerate() {
            diag += h1[(a, a)].re * na as f64;
        }
        trip.push((i, i, C64::new(diag, 0.0)));
        for b in 0..d {
            let nb = occ[b];
            if nb == 0 {
                continue;
            }
            occ[b] -= 1;
            for &(a, hab) in &hops[b] {
                let na = occ[a];
                occ[a] += 1;
                let amp = hab * ((nb as f64) * (na as f64 + 1.0)).sqrt();
                trip.push((basis.sector_index(&occ), i, amp));
                occ[a] = na;
            }
            occ[b] = nb;
        }
    }
    Ok(SparseMatrix::from_triplets(dim, dim, trip))
}

/// Interaction `𝑽_n`, diagonal in the occupation basis.
pub fn sector_interaction_diag(spec: &HamiltonianSpec, basis: &FockBasis, n: usize) -> Result<Vec<f64>> {
    check_sector(basis, spec, n)?;
    Ok((0..basis.sector_dim(n)).map(|i| pair_energy(&spec.pair, basis.sector_occupation(n, i))).collect())
}

/// `H_n` applied to a vector of `(C^d)^{⊗n}` (slot 1 most significant).
pub fn apply_tensor_hamiltonian(spec: &HamiltonianSpec, n: usize, v: &[C64]) -> Vec<C64> {
    let d = spec.grid.d;
    let h1 = spec.one_body();
    let dim = v.len();
    let mut out = vec![ZERO; dim];
    let mut digits = vec![0usize; n];
    for (idx, &amp) in v.iter().enumerate() {
        if amp == ZERO {
            continue;
        }
        let mut x = idx;
        for slot in (0..n).rev() {
            digits[slot] = x % d;
            x /= d;
        }
        let mut pot = 0.0;
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    pot += spec.pair.get(digits[j], digits[k]);
                }
            }
        }
        out[idx] += amp * pot;
        let mut stride = 1;
        for slot in (0..n).rev() {
            let cur = digits[slot];
            let base = idx - cur * stride;
            for a in 0..d {
                let hac = h1[(a, cur)];
                if hac != ZERO {
                    out[base + a * stride] += hac * amp;
                }
            }
            stride *= d;
        }
    }
    out
}

/// First-quantized `H_n` on the tensor space as a dense matrix.
pub fn tensor_hamiltonian(spec: &HamiltonianSpec, n: usize, budget: u64) -> Result<CMatrix> {
    let dim = spec.grid.d.pow(n as u32);
    let required = (dim as u64).pow(2) * 16;
    if required > budget {
        return Err(Error::Budget { required, budget });
    }
    let mut m = CMatrix::zeros(dim, dim);
    let mut e = vec![ZERO; dim];
    for c in 0..dim {
        e[c] = ONE;
        for (r, z) in apply_tensor_hamiltonian(spec, n, &e).into_iter().enumerate() {
            m[(r, c)] = z;
        }
        e[c] = ZERO;
    }
    Ok(m)
}

/// `H_n` on `F_n` built on the tensor space and compressed by the symmetrizer.
pub fn sector_hamiltonian(spec: &HamiltonianSpec, basis: &FockBasis, n: usize) -> Result<SectorOperator> {
    check_sector(basis, spec, n)?;
    let s = fock::symmetrizer(basis, n)?;
    let mut hs = CMatrix::zeros(s.rows(), s.cols());
    for c in 0..s.cols() {
        let col = apply_tensor_hamiltonian(spec, n, &s.column(c));
        for (r, z) in col.into_iter().enumerate() {
            hs[(r, c)] = z;
        }
    }
    Ok(SectorOperator { n, block: s.adjoint().matmul(&hs).hermitian_part() })
}

/// Block-diagonal second-quantized Hamiltonian on all sectors.
pub fn full_hamiltonian(spec: &HamiltonianSpec, basis: &Arc<FockBasis>) -> Result<FullOperator> {
    basis.check_dense(basis.dim())?;
    let blocks = (0..=basis.nmax()).map(|n| Ok(sector_hamiltonian_sparse(spec, basis, n)?.to_dense())).collect::<Result<Vec<_>>>()?;
    FullOperator::from_sector_blocks(basis, &blocks)
}

const TAYLOR_TOL: f64 = 1e-17;

/// `e^{−itH} v` by a Taylor series on steps with `‖H − c‖·dt ≤ 1`.
pub fn taylor_evolve(h: &SparseMatrix, t: f64, v: &[C64]) -> Vec<C64> {
    if t == 0.0 {
        return v.to_vec();
    }
    let (lo, hi) = h.gershgorin();
    let center = 0.5 * (lo + hi);
    let radius = 0.5 * (hi - lo);
    let steps = ((t.abs() * radius).ceil() as usize).max(1);
    let dt = t / steps as f64;
    let phase = C64::from_polar(1.0, -center * dt);
    let mut x = v.to_vec();
    for _ in 0..steps {
        let mut term = x.clone();
        let mut acc = x.clone();
        for k in 1..=80 {
            let mut ht = h.matvec(&term);
            let f = C64::new(0.0, -dt / k as f64);
            for (y, &tz) in ht.iter_mut().zip(&term) {
                *y = f * (*y - tz * center);
            }
            term = ht;
            for (a, b) in acc.iter_mut().zip(&term) {
                *a += b;
            }
            if numkit::vec_norm(&term) <= TAYLOR_TOL * numkit::vec_norm(&acc) {
                break;
            }
        }
        x = acc.into_iter().map(|z| z * phase).collect();
    }
    x
}

/// Matrix-free sector evolution with lazily built sparse Hamiltonians.
pub struct SectorDynamics {
    pub spec: HamiltonianSpec,
    basis: Arc<FockBasis>,
    sectors: Vec<OnceLock<SparseMatrix>>,
}

impl SectorDynamics {
    pub fn new(spec: HamiltonianSpec, basis: Arc<FockBasis>) -> Result<SectorDynamics> {
        check_sector(&basis, &spec, 0)?;
        let sectors = (0..=basis.nmax()).map(|_| OnceLock::new()).collect();
        Ok(SectorDynamics { spec, basis, sectors })
    }

    pub fn hamiltonian(&self, n: usize) -> Result<&SparseMatrix> {
        if n > self.basis.nmax() {
            return Err(Error::InvalidArgument(format!("sector {n} above cutoff {}", self.basis.nmax())));
        }
        if let Some(h) = self.sectors[n].get() {
            return Ok(h);
        }
        let h = sector_hamiltonian_sparse(&self.spec, &self.basis, n)?;
        Ok(self.sectors[n].get_or_init(|| h))
    }

    /// Dense `e^{−itH_n}`, built column by column.
    pub fn propagator(&self, n: usize, t: f64) -> Result<CMatrix> {
        let dim = self.basis.sector_dim(n);
        self.basis.check_dense(dim)?;
        let h = self.hamiltonian(n)?;
        let mut u = CMatrix::zeros(dim, dim);
        let mut e = vec![ZERO; dim];
        for c in 0..dim {
            e[c] = ONE;
            for (r, z) in taylor_evolve(h, t, &e).into_iter().enumerate() {
                u[(r, c)] = z;
            }
            e[c] = ZERO;
        }
        Ok(u)
    }
}

impl Evolution for SectorDynamics {
    fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    fn evolve(&self, n: usize, t: f64, v: &[C64]) -> Result<Vec<C64>> {
        Ok(taylor_evolve(self.hamiltonian(n)?, t, v))
    }
}

/// Per-sector eigendecompositions of `H_n`, tagged with the Hamiltonian they came from.
#[derive(Clone, Debug)]
pub struct PropagatorCache {
    tag: u64,
    basis: Arc<FockBasis>,
    eigs: Vec<EigenDecomposition>,
}

impl PropagatorCache {
    pub fn new(spec: &HamiltonianSpec, basis: &Arc<FockBasis>) -> Result<PropagatorCache> {
        check_sector(basis, spec, 0)?;
        let eigs = (0..=basis.nmax())
            .map(|n| {
                basis.check_dense(basis.sector_dim(n))?;
                numkit::hermitian_eig(&sector_hamiltonian_sparse(spec, basis, n)?.to_dense())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PropagatorCache { tag: spec.fingerprint(), basis: basis.clone(), eigs })
    }

    pub fn is_valid_for(&self, spec: &HamiltonianSpec) -> bool {
        self.tag == spec.fingerprint()
    }

    pub fn check(&self, spec: &HamiltonianSpec) -> Result<()> {
        if self.is_valid_for(spec) {
            Ok(())
        } else {
            Err(Error::StaleCache)
        }
    }

    pub fn eig(&self, n: usize) -> &EigenDecomposition {
        &self.eigs[n]
    }

    /// `e^{−itH_n}`.
    pub fn unitary(&self, n: usize, t: f64) -> CMatrix {
        let e = &self.eigs[n];
        let ph: Vec<C64> = e.values.iter().map(|&x| C64::from_polar(1.0, -t * x)).collect();
        e.apply_values(&ph)
    }

    /// Ground-state energy of sector `n`.
    pub fn ground_energy(&self, n: usize) -> f64 {
        self.eigs[n].values[0]
    }
}

impl Evolution for PropagatorCache {
    fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    fn evolve(&self, n: usize, t: f64, v: &[C64]) -> Result<Vec<C64>> {
        Ok(self.unitary(n, t).matvec(v))
    }
}

/// `α(t)(A) = e^{itH} A e^{−itH}` on one sector.
pub fn heisenberg_sector(cache: &PropagatorCache, spec: &HamiltonianSpec, a: &SectorOperator, t: f64) -> Result<SectorOperator> {
    cache.check(spec)?;
    let u = cache.unitary(a.n, t);
    Ok(SectorOperator { n: a.n, block: u.adjoint().matmul(&a.block).matmul(&u) })
}

/// `α(t)(A)` on the full truncated space, block by block.
pub fn heisenberg_full(cache: &PropagatorCache, spec: &HamiltonianSpec, a: &FullOperator, t: f64) -> Result<FullOperator> {
    cache.check(spec)?;
    if *a.basis != *cache.basis {
        return Err(Error::Dimension("operator and cache use different Fock bases".into()));
    }
    let b = &a.basis;
    let us: Vec<CMatrix> = (0..=b.nmax()).map(|n| cache.unitary(n, t)).collect();
    let mut out = CMatrix::zeros(b.dim(), b.dim());
    for n in 0..=b.nmax() {
        for m in 0..=b.nmax() {
            let blk = a.block(n, m);
            if blk.max_abs() == 0.0 {
                continue;
            }
            out.set_block(b.sector_offset(n), b.sector_offset(m), &us[n].adjoint().matmul(&blk).matmul(&us[m]));
        }
    }
    FullOperator::new(b.clone(), out)
}
