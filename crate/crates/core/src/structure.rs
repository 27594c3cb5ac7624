//! Sector restrictions and seminorms, graded sector operators with the maps
//! `κ_n`, cluster-limit evaluation under large translations and the coherence
//! of the dynamics with `κ_n`.

use std::sync::Arc;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::fock::{self, EmbedInput, FockBasis, FullOperator, LocalOperator, SectorOperator};
use crate::lattice::{translate, WaveFn};
use crate::numkit::{self, CMatrix, C64, ONE, ZERO};
use crate::report::{strictly_decreasing, CheckReport, Series};

/// Number-conserving operators that can act on a sector of a Fock basis.
pub trait SectorAction {
    fn apply_sector(&self, basis: &FockBasis, n: usize, v: &[C64]) -> Result<Vec<C64>>;
}

impl SectorAction for FullOperator {
    fn apply_sector(&self, basis: &FockBasis, n: usize, v: &[C64]) -> Result<Vec<C64>> {
        if *self.basis != *basis {
            return Err(Error::Dimension("operator lives on a different Fock basis".into()));
        }
        if !self.conserves_n {
            return Err(Error::NotConserving { leak: self.sector_leak() });
        }
        Ok(self.block(n, n).matvec(v))
    }
}

impl SectorAction for LocalOperator {
    fn apply_sector(&self, basis: &FockBasis, n: usize, v: &[C64]) -> Result<Vec<C64>> {
        LocalOperator::apply_sector(self, basis, n, v)
    }
}

impl SectorAction for SectorOperator {
    fn apply_sector(&self, basis: &FockBasis, n: usize, v: &[C64]) -> Result<Vec<C64>> {
        if n != self.n || self.dim() != basis.sector_dim(n) {
            return Err(Error::Dimension(format!("sector operator on level {} applied on level {n}", self.n)));
        }
        Ok(self.block.matvec(v))
    }
}

/// Time evolution `e^{−itH}` on single sectors.
pub trait Evolution {
    fn basis(&self) -> &Arc<FockBasis>;
    fn evolve(&self, n: usize, t: f64, v: &[C64]) -> Result<Vec<C64>>;
}

/// The diagonal block `ρ_n(A) = A ↾ F_n`.
pub fn restrict(a: &FullOperator, n: usize) -> Result<SectorOperator> {
    if !a.conserves_n {
        return Err(Error::NotConserving { leak: a.sector_leak() });
    }
    if n > a.basis.nmax() {
        return Err(Error::InvalidArgument(format!("sector {n} above cutoff {}", a.basis.nmax())));
    }
    Ok(SectorOperator { n, block: a.block(n, n) })
}

/// `‖A‖_n`.
pub fn seminorm(a: &FullOperator, n: usize) -> Result<f64> {
    Ok(restrict(a, n)?.norm())
}

/// `‖A‖_n` of a window-local operator on a larger basis.
pub fn local_seminorm(a: &LocalOperator, big: &FockBasis, n: usize) -> Result<f64> {
    Ok(a.restrict(big, n)?.norm())
}

/// One term `weight · C ⊗_s 1^{⊗(n−m)}` of a graded sector operator.
#[derive(Clone, Debug)]
pub struct GradedTerm {
    pub weight: C64,
    pub op: EmbedInput,
}

impl GradedTerm {
    pub fn m(&self) -> usize {
        self.op.body_order()
    }
}

/// `Σ_m C_{m,n}` at level `n`, each term kept with its body order.
#[derive(Clone, Debug)]
pub struct GradedOperator {
    pub n: usize,
    pub terms: Vec<GradedTerm>,
}

impl GradedOperator {
    pub fn new(n: usize, terms: Vec<GradedTerm>) -> Result<GradedOperator> {
        let mut seen = Vec::new();
        for t in &terms {
            let m = t.m();
            if m > n {
                return Err(Error::InvalidArgument(format!("{m}-body term at level {n}")));
            }
            if seen.contains(&m) {
                return Err(Error::InvalidArgument(format!("body order {m} appears twice")));
            }
            seen.push(m);
        }
        Ok(GradedOperator { n, terms })
    }

    pub fn unit(n: usize) -> GradedOperator {
        GradedOperator { n, terms: vec![GradedTerm { weight: ONE, op: EmbedInput::Factors(vec![]) }] }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.weight == ZERO)
    }

    pub fn materialize(&self, basis: &FockBasis) -> Result<SectorOperator> {
        let dim = basis.sector_dim(self.n);
        let mut block = CMatrix::zeros(dim, dim);
        for t in &self.terms {
            if t.weight == ZERO {
                continue;
            }
            block += &fock::symmetric_embed(basis, &t.op, self.n)?.block.scale(t.weight);
        }
        Ok(SectorOperator { n: self.n, block })
    }
}

/// `κ_n(Σ C_{m,n}) = Σ_{m<n} (n−m)/n · C_{m,n−1}`, with `κ_0 = 0`.
pub fn kappa(g: &GradedOperator) -> GradedOperator {
    if g.n == 0 {
        return GradedOperator { n: 0, terms: vec![] };
    }
    let n = g.n;
    let terms = g
        .terms
        .iter()
        .filter(|t| t.m() < n)
        .map(|t| GradedTerm { weight: t.weight * ((n - t.m()) as f64 / n as f64), op: t.op.clone() })
        .collect();
    GradedOperator { n: n - 1, terms }
}

/// Single-particle components `f_1..f_n`, `g_1..g_n`; the last of each is translated.
#[derive(Clone, Debug)]
pub struct ClusterVectors {
    pub fs: Vec<WaveFn>,
    pub gs: Vec<WaveFn>,
    pub translation: i64,
}

impl ClusterVectors {
    pub fn new(fs: Vec<WaveFn>, gs: Vec<WaveFn>, translation: i64) -> Result<ClusterVectors> {
        if fs.is_empty() || fs.len() != gs.len() {
            return Err(Error::InvalidArgument("need equally many f and g functions, at least one".into()));
        }
        if fs.iter().chain(&gs).any(|f| f.norm() == 0.0) {
            return Err(Error::InvalidArgument("cluster vectors built from a zero function".into()));
        }
        Ok(ClusterVectors { fs, gs, translation })
    }

    pub fn n(&self) -> usize {
        self.fs.len()
    }

    pub fn at(&self, translation: i64) -> ClusterVectors {
        ClusterVectors { translation, ..self.clone() }
    }

    fn moved(list: &[WaveFn], x: i64) -> Result<Vec<WaveFn>> {
        let mut out = list.to_vec();
        let last = out.len() - 1;
        out[last] = translate(&list[last], x)?;
        Ok(out)
    }

    /// `(Φ^n(x), Ψ^n(x), Φ^{n−1}, Ψ^{n−1})` as sector vectors.
    pub fn vectors(&self, basis: &FockBasis) -> Result<[Vec<C64>; 4]> {
        let n = self.n();
        let phi_n = fock::product_state(basis, &Self::moved(&self.fs, self.translation)?)?;
        let psi_n = fock::product_state(basis, &Self::moved(&self.gs, self.translation)?)?;
        let phi = fock::product_state(basis, &self.fs[..n - 1])?;
        let psi = fock::product_state(basis, &self.gs[..n - 1])?;
        if [&phi_n, &psi_n].iter().any(|v| numkit::vec_norm(v) == 0.0) {
            return Err(Error::InvalidArgument("degenerate cluster vector".into()));
        }
        Ok([phi_n, psi_n, phi, psi])
    }

    /// `⟨g_n, f_n⟩`, unchanged by the common translation.
    pub fn last_overlap(&self) -> C64 {
        self.gs[self.n() - 1].inner(&self.fs[self.n() - 1])
    }
}

/// Both sides of the cluster identity at one translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterValues {
    /// `⟨Ψ^n(x), A Φ^n(x)⟩`.
    pub lhs: C64,
    /// `n^{−1} ⟨Ψ^{n−1}, A Φ^{n−1}⟩ ⟨g_n, f_n⟩`.
    pub rhs: C64,
}

impl ClusterValues {
    pub fn gap(&self) -> f64 {
        (self.lhs - self.rhs).norm()
    }
}

pub fn cluster_element(a: &dyn SectorAction, basis: &FockBasis, cv: &ClusterVectors) -> Result<ClusterValues> {
    let n = cv.n();
    let [phi_n, psi_n, phi, psi] = cv.vectors(basis)?;
    let lhs = numkit::inner(&psi_n, &a.apply_sector(basis, n, &phi_n)?);
    let low = numkit::inner(&psi, &a.apply_sector(basis, n - 1, &phi)?);
    Ok(ClusterValues { lhs, rhs: low * cv.last_overlap() / n as f64 })
}

pub const CLUSTER_ANCHOR: &str = "cluster limit of translated single-particle components";
pub const COHERENCE_ANCHOR: &str = "coherence of the dynamics with the inverse maps";

/// Exact-equality check at the configured translation.
pub fn cluster_limit_check(a: &dyn SectorAction, basis: &FockBasis, cv: &ClusterVectors, tol: f64) -> Result<CheckReport> {
    let start = Instant::now();
    let v = cluster_element(a, basis, cv)?;
    let scale = v.rhs.norm().max(v.lhs.norm()).max(1.0);
    Ok(CheckReport::upper("cluster_limit", CLUSTER_ANCHOR, v.gap() / scale, 0.0, tol)
        .with_param("n", cv.n())
        .with_param("translation", cv.translation)
        .timed(start))
}

/// Gap of the cluster identity over translation distances.
pub fn cluster_gap_series(a: &dyn SectorAction, basis: &FockBasis, cv: &ClusterVectors, distances: &[i64]) -> Result<Series> {
    let mut s = Series::new("cluster_gap", &["translation", "gap"]);
    for &x in distances {
        s.push(vec![x as f64, cluster_element(a, basis, &cv.at(x))?.gap()]);
    }
    Ok(s)
}

/// Cluster identity for `α(t)(A) = e^{itH} A e^{−itH}` at one translation.
pub fn evolved_cluster_element(a: &dyn SectorAction, dynamics: &dyn Evolution, t: f64, cv: &ClusterVectors) -> Result<ClusterValues> {
    let basis = dynamics.basis().clone();
    let n = cv.n();
    let [phi_n, psi_n, phi, psi] = cv.vectors(&basis)?;
    let ev = |k: usize, v: &[C64]| if t == 0.0 { Ok(v.to_vec()) } else { dynamics.evolve(k, t, v) };
    let (phi_n, psi_n) = (ev(n, &phi_n)?, ev(n, &psi_n)?);
    let (phi, psi) = (ev(n - 1, &phi)?, ev(n - 1, &psi)?);
    let lhs = numkit::inner(&psi_n, &a.apply_sector(&basis, n, &phi_n)?);
    let low = numkit::inner(&psi, &a.apply_sector(&basis, n - 1, &phi)?);
    Ok(ClusterValues { lhs, rhs: low * cv.last_overlap() / n as f64 })
}

/// Gap of the evolved cluster identity over translation distances: passes when
/// the gap decreases strictly with distance and ends below `tol`.
pub fn coherence_check(
    a: &dyn SectorAction,
    dynamics: &dyn Evolution,
    t: f64,
    cv: &ClusterVectors,
    distances: &[i64],
    tol: f64,
) -> Result<CheckReport> {
    let start = Instant::now();
    let mut s = Series::new("coherence_gap", &["translation", "gap"]);
    for &x in distances {
        s.push(vec![x as f64, evolved_cluster_element(a, dynamics, t, &cv.at(x))?.gap()]);
    }
    let gaps = s.column("gap").unwrap_or_default();
    let last = gaps.last().copied().unwrap_or(f64::NAN);
    let mut r = CheckReport::upper("coherence", COHERENCE_ANCHOR, last, 0.0, tol);
    if !strictly_decreasing(&gaps) {
        r.pass = false;
        r.note = Some("gap not strictly decreasing in the translation".into());
    }
    Ok(r.with_param("n", cv.n()).with_param("t", t).with_series(s).timed(start))
}

/// Result of expanding a sector block into window-supported graded terms.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub graded: GradedOperator,
    pub residual: f64,
    pub rank: usize,
    pub columns: usize,
    pub decomposable: bool,
}

pub const DECOMPOSE_TOL: f64 = 1e-9;

/// Least-squares expansion of `K` on `F_n` into `Σ_m C_m ⊗_s 1^{⊗(n−m)}` with
/// each `C_m` supported on the `m`-particle states of the window modes.
/// Ties between orders are broken by the minimum-norm solution.
pub fn graded_decompose(basis: &FockBasis, k: &SectorOperator, window: &[usize]) -> Result<Decomposition> {
    let n = k.n;
    if k.dim() != basis.sector_dim(n) {
        return Err(Error::Dimension(format!("block of size {} on sector {n}", k.dim())));
    }
    if window.iter().any(|&j| j >= basis.d()) {
        return Err(Error::InvalidArgument("window site outside the basis".into()));
    }
    let wb = fock::enumerate_basis(window.len(), n)?;
    let mut inputs: Vec<(usize, usize, usize)> = Vec::new();
    let mut columns: Vec<Vec<C64>> = Vec::new();
    for m in 0..=n {
        let states: Vec<usize> = (0..wb.sector_dim(m))
            .map(|i| {
                let mut occ = vec![0u8; basis.d()];
                for (w, &site) in window.iter().enumerate() {
                    occ[site] = wb.sector_occupation(m, i)[w];
                }
                basis.sector_index(&occ)
            })
            .collect();
        for (a, &sa) in states.iter().enumerate() {
            for (b, &sb) in states.iter().enumerate() {
                let mut c = CMatrix::zeros(basis.sector_dim(m), basis.sector_dim(m));
                c[(sa, sb)] = ONE;
                let e = fock::symmetric_embed(basis, &EmbedInput::Block(SectorOperator { n: m, block: c }), n)?;
                columns.push(e.block.into_data());
                inputs.push((m, a, b));
            }
        }
    }
    let rows = k.dim() * k.dim();
    let system = CMatrix::from_fn(rows, columns.len(), |r, c| columns[c][r]);
    let (x, rank, residual) = numkit::least_squares(&system, k.block.data(), 1e-12)?;
    let mut per_m: Vec<CMatrix> = (0..=n).map(|m| CMatrix::zeros(basis.sector_dim(m), basis.sector_dim(m))).collect();
    for (&(m, a, b), coef) in inputs.iter().zip(&x) {
        let to_big = |i: usize| {
            let mut occ = vec![0u8; basis.d()];
            for (w, &site) in window.iter().enumerate() {
                occ[site] = wb.sector_occupation(m, i)[w];
            }
            basis.sector_index(&occ)
        };
        per_m[m][(to_big(a), to_big(b))] += *coef;
    }
    let terms = per_m
        .into_iter()
        .enumerate()
        .filter(|(_, c)| c.max_abs() > 1e-13)
        .map(|(m, c)| GradedTerm { weight: ONE, op: EmbedInput::Block(SectorOperator { n: m, block: c }) })
        .collect();
    let scale = k.block.frobenius_norm().max(1.0);
    Ok(Decomposition {
        graded: GradedOperator { n, terms },
        residual,
        rank,
        columns: columns.len(),
        decomposable: residual <= DECOMPOSE_TOL * scale,
    })
}
