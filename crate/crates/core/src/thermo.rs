//! Renormalized Hamiltonians, positive-type pair potentials, Gibbs states of
//! the trapped gas, the KMS condition and condensate trial energies.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{sector_hamiltonian_sparse, HamiltonianSpec, Trap};
use crate::error::{Error, Result};
use crate::fock::{FockBasis, FullOperator};
use crate::lattice::{Grid, PairTable, WaveFn};
use crate::numkit::{self, CMatrix, C64, ONE, ZERO};
use crate::report::{CheckReport, Series};

pub const POSITIVITY_TOL: f64 = 1e-10;
pub const KMS_TOL: f64 = 1e-10;
pub const KMS_DETECTOR_FLOOR: f64 = 1e-3;
/// Number of low eigenstates the KMS detector perturbation lives on.
pub const PERTURBATION_RANK: usize = 4;
pub const GOLDEN_THOMPSON_TOL: f64 = 1e-10;
pub const CONDENSATE_TOL: f64 = 1e-10;
pub const CONDENSATE_SCALING_TOL: f64 = 0.05;
const FOURIER_TOL: f64 = 1e-12;
const EDGE_TOL: f64 = 1e-3;

pub const RENORMALIZE_ANCHOR: &str = "renormalized Hamiltonian with the vacuum as ground state";
pub const GIBBS_ANCHOR: &str = "trapped Gibbs states and the KMS condition";
pub const GOLDEN_THOMPSON_ANCHOR: &str = "Golden-Thompson bound on trapped partition functions";
pub const CONDENSATE_ANCHOR: &str = "energy of condensate trial states";

fn sector_dense(spec: &HamiltonianSpec, basis: &FockBasis, n: usize) -> Result<CMatrix> {
    basis.check_dense(basis.sector_dim(n))?;
    Ok(sector_hamiltonian_sparse(spec, basis, n)?.to_dense())
}

/// Eigenvalues of every sector Hamiltonian, sector by sector.
pub fn sector_spectra(spec: &HamiltonianSpec, basis: &FockBasis) -> Result<Vec<Vec<f64>>> {
    (0..=basis.nmax()).map(|n| Ok(numkit::hermitian_eig(&sector_dense(spec, basis, n)?)?.values)).collect()
}

/// `E(n) = −min spec(H_n)`.
pub fn ground_energy(spec: &HamiltonianSpec, basis: &FockBasis, n: usize) -> Result<f64> {
    Ok(-numkit::hermitian_eig(&sector_dense(spec, basis, n)?)?.values[0])
}

/// A function of `N` added to the Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub enum NumberShift {
    Linear(f64),
    PerSector(Vec<f64>),
}

impl NumberShift {
    pub fn at(&self, n: usize) -> f64 {
        match self {
            NumberShift::Linear(c) => c * n as f64,
            NumberShift::PerSector(v) => v[n],
        }
    }
}

/// `H + E(N)`.
#[derive(Clone, Debug)]
pub struct Renormalized {
    pub spec: HamiltonianSpec,
    pub shift: NumberShift,
}

impl Renormalized {
    pub fn sector_block(&self, basis: &FockBasis, n: usize) -> Result<CMatrix> {
        let h = sector_dense(&self.spec, basis, n)?;
        Ok(h.shift(C64::new(self.shift.at(n), 0.0)))
    }

    /// Smallest eigenvalue over all sectors up to the cutoff.
    pub fn min_eigenvalue(&self, basis: &FockBasis) -> Result<f64> {
        let mut lo = f64::INFINITY;
        for n in 0..=basis.nmax() {
            lo = lo.min(numkit::hermitian_eig(&self.sector_block(basis, n)?)?.values[0]);
        }
        Ok(lo)
    }

    /// `‖H_r Ω‖`.
    pub fn vacuum_residual(&self, basis: &FockBasis) -> Result<f64> {
        Ok(numkit::vec_norm(&self.sector_block(basis, 0)?.matvec(&basis.vacuum_sector())))
    }

    pub fn full(&self, basis: &Arc<FockBasis>) -> Result<FullOperator> {
        basis.check_dense(basis.dim())?;
        let blocks = (0..=basis.nmax()).map(|n| self.sector_block(basis, n)).collect::<Result<Vec<_>>>()?;
        FullOperator::from_sector_blocks(basis, &blocks)
    }
}

/// Shifts every sector by its ground energy.
pub fn renormalize(spec: &HamiltonianSpec, basis: &FockBasis) -> Result<Renormalized> {
    let e = (0..=basis.nmax()).map(|n| ground_energy(spec, basis, n)).collect::<Result<Vec<_>>>()?;
    Ok(Renormalized { spec: spec.clone(), shift: NumberShift::PerSector(e) })
}

/// `H + V(0)N`, the renormalization for positive-type potentials.
pub fn renormalize_positive_type(spec: &HamiltonianSpec) -> HamiltonianSpec {
    HamiltonianSpec { chemical_shift: spec.chemical_shift + spec.pair.v0(), ..spec.clone() }
}

/// Positivity of `H + E(N)` and annihilation of the vacuum.
pub fn renormalization_check(spec: &HamiltonianSpec, basis: &FockBasis) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let r = renormalize(spec, basis)?;
    let lo = r.min_eigenvalue(basis)?;
    let vac = r.vacuum_residual(basis)?;
    Ok(vec![
        CheckReport::lower("renormalized_positivity", RENORMALIZE_ANCHOR, lo, 0.0, POSITIVITY_TOL)
            .with_param("nmax", basis.nmax())
            .timed(start),
        CheckReport::upper("renormalized_vacuum", RENORMALIZE_ANCHOR, vac, 0.0, POSITIVITY_TOL).timed(start),
    ])
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositiveType {
    pub accepted: bool,
    /// Real parts of the discrete Fourier transform of `V(x_j − x_0)`.
    pub spectrum: Vec<f64>,
    pub min: f64,
}

/// Discrete Fourier test for a translation-invariant pair table on a periodic grid.
pub fn positive_type_check(grid: &Grid, pair: &PairTable) -> Result<PositiveType> {
    if !grid.periodic {
        return Err(Error::InvalidArgument("positive type needs a periodic grid".into()));
    }
    let d = grid.d;
    if pair.d != d {
        return Err(Error::Dimension(format!("pair table for {} sites on a {d}-site grid", pair.d)));
    }
    for a in 0..d {
        for b in 0..d {
            if pair.get(a, b) != pair.get(0, (b + d - a) % d) {
                return Err(Error::InvalidArgument("pair table is not translation invariant".into()));
            }
        }
    }
    let spectrum: Vec<f64> =
        (0..d).map(|k| (0..d).map(|j| pair.get(0, j) * (2.0 * PI * (j * k) as f64 / d as f64).cos()).sum()).collect();
    let min = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PositiveType { accepted: min >= -FOURIER_TOL, spectrum, min })
}

/// `min spec(H + V(0)N)` over all sectors up to the cutoff.
pub fn positive_type_energy_floor(spec: &HamiltonianSpec, basis: &FockBasis) -> Result<f64> {
    Renormalized { spec: renormalize_positive_type(spec), shift: NumberShift::Linear(0.0) }.min_eigenvalue(basis)
}

/// `ρ = e^{−β(H_L − μN)}/Z` on the truncated Fock space.
#[derive(Clone, Debug)]
pub struct GibbsState {
    pub beta: f64,
    pub mu: f64,
    pub rho: FullOperator,
    /// `ln Z`, computed as `ln Σ e^{−β(k − shift)} − β·shift`.
    pub log_z: f64,
    /// Smallest eigenvalue of `K = H_L − μN`.
    pub shift: f64,
    /// Set when `μ > −V(0)` was allowed explicitly.
    pub mu_override: bool,
    /// Set for states modified after construction.
    pub perturbed: bool,
    generator: Vec<f64>,
    vectors: CMatrix,
    components: Vec<Component>,
}

/// `p|w⟩⟨w|` with `w` sparse in the generator eigenbasis; `ln p` is stored.
#[derive(Clone, Debug)]
struct Component {
    log_weight: f64,
    entries: Vec<(usize, C64)>,
}

/// Eigenvalues and block-diagonal eigenvectors of `H − μN`.
fn generator_eig(spec: &HamiltonianSpec, basis: &FockBasis, mu: f64) -> Result<(Vec<f64>, CMatrix)> {
    basis.check_dense(basis.dim())?;
    let mut values = Vec::with_capacity(basis.dim());
    let mut vectors = CMatrix::zeros(basis.dim(), basis.dim());
    for n in 0..=basis.nmax() {
        let e = numkit::hermitian_eig(&sector_dense(spec, basis, n)?)?;
        values.extend(e.values.iter().map(|x| x - mu * n as f64));
        let o = basis.sector_offset(n);
        vectors.set_block(o, o, &e.vectors);
    }
    Ok((values, vectors))
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn gibbs_state(spec: &HamiltonianSpec, basis: &Arc<FockBasis>, beta: f64, mu: f64, allow_mu_override: bool) -> Result<GibbsState> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("inverse temperature must be positive, got {beta}")));
    }
    if spec.trap == Trap::Infinite {
        return Err(Error::InvalidArgument("Gibbs states need a finite trap".into()));
    }
    let mu_override = mu > -spec.pair.v0();
    if mu_override && !allow_mu_override {
        return Err(Error::InvalidArgument(format!("chemical potential {mu} exceeds −V(0) = {}", -spec.pair.v0())));
    }
    let (generator, vectors) = generator_eig(spec, basis, mu)?;
    let shift = generator.iter().copied().fold(f64::INFINITY, f64::min);
    let scaled = generator.iter().map(|k| -beta * (k - shift));
    let lse = log_sum_exp(scaled.clone());
    let log_weights: Vec<f64> = scaled.map(|x| x - lse).collect();
    let w: Vec<C64> = log_weights.iter().map(|x| C64::new(x.exp(), 0.0)).collect();
    let rho = conjugate_diag(&vectors, &w);
    Ok(GibbsState {
        beta,
        mu,
        rho: FullOperator::new(basis.clone(), rho.hermitian_part())?,
        log_z: lse - beta * shift,
        shift,
        mu_override,
        perturbed: false,
        generator,
        vectors,
        components: log_weights.into_iter().enumerate().map(|(i, lw)| Component { log_weight: lw, entries: vec![(i, ONE)] }).collect(),
    })
}

/// `V diag(w) V†`.
fn conjugate_diag(v: &CMatrix, w: &[C64]) -> CMatrix {
    let mut scaled = v.clone();
    for i in 0..v.rows() {
        for (z, &g) in scaled.row_mut(i).iter_mut().zip(w) {
            *z *= g;
        }
    }
    scaled.matmul(&v.adjoint())
}

impl GibbsState {
    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.rho.basis
    }

    /// `Tr(ρA)`.
    pub fn expectation(&self, a: &FullOperator) -> C64 {
        trace_product(&self.rho.matrix, &a.matrix)
    }

    /// `ω(H_L − μN)`.
    pub fn generator_expectation(&self) -> f64 {
        let p = self.rho_in_eigenbasis();
        self.generator.iter().enumerate().map(|(i, k)| k * p[(i, i)].re).sum()
    }

    /// `ω(N)`.
    pub fn number_expectation(&self) -> f64 {
        let b = self.basis();
        (0..b.dim()).map(|i| b.particle_number(i) as f64 * self.rho.matrix[(i, i)].re).sum()
    }

    /// Weight of the lowest eigenvector of `H_L − μN`.
    pub fn ground_weight(&self) -> f64 {
        let i = (0..self.generator.len()).min_by(|&a, &b| self.generator[a].total_cmp(&self.generator[b])).unwrap_or(0);
        let v = self.vectors.column(i);
        numkit::inner(&v, &self.rho.matrix.matvec(&v)).re
    }

    /// `e^{−itK}` with `K = H_L − μN`.
    pub fn propagator(&self, t: f64) -> CMatrix {
        let ph: Vec<C64> = self.generator.iter().map(|&k| C64::from_polar(1.0, -t * k)).collect();
        conjugate_diag(&self.vectors, &ph)
    }

    /// `α_t(A) = e^{itK} A e^{−itK}`.
    pub fn evolve(&self, a: &FullOperator, t: f64) -> Result<FullOperator> {
        let u = self.propagator(t);
        FullOperator::new(self.basis().clone(), u.adjoint().matmul(&a.matrix).matmul(&u))
    }

    fn rho_in_eigenbasis(&self) -> CMatrix {
        self.vectors.adjoint().matmul(&self.rho.matrix).matmul(&self.vectors)
    }

    /// `(1−ε)ρ + ε|v⟩⟨v|` with `v` a random unit vector on the lowest
    /// eigenstates of the generator. Not KMS for `0 < ε < 1`.
    pub fn perturbed(&self, eps: f64, seed: u64) -> Result<GibbsState> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidArgument(format!("perturbation weight must lie in (0, 1), got {eps}")));
        }
        let mut order: Vec<usize> = (0..self.generator.len()).collect();
        order.sort_by(|&a, &b| self.generator[a].total_cmp(&self.generator[b]));
        order.truncate(PERTURBATION_RANK);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<C64> = order.iter().map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let norm = numkit::vec_norm(&raw);
        let entries: Vec<(usize, C64)> = order.iter().zip(&raw).map(|(&i, &z)| (i, z / norm)).collect();
        let mut full = vec![ZERO; self.generator.len()];
        for &(i, z) in &entries {
            full[i] = z;
        }
        let v = self.vectors.matvec(&full);
        let dim = v.len();
        let rho = CMatrix::from_fn(dim, dim, |i, j| self.rho.matrix[(i, j)] * (1.0 - eps) + v[i] * v[j].conj() * eps);
        let mut components: Vec<Component> = self
            .components
            .iter()
            .map(|c| Component { log_weight: c.log_weight + (1.0 - eps).ln(), entries: c.entries.clone() })
            .collect();
        components.push(Component { log_weight: eps.ln(), entries });
        Ok(GibbsState {
            rho: FullOperator::new(self.basis().clone(), rho.hermitian_part())?,
            perturbed: true,
            components,
            ..self.clone()
        })
    }

    /// Components re-expressed in the orthonormal basis `v`.
    fn components_in(&self, v: &CMatrix) -> Vec<Component> {
        let m = v.adjoint().matmul(&self.vectors);
        self.components
            .iter()
            .map(|c| {
                let entries = (0..m.rows())
                    .map(|r| (r, c.entries.iter().map(|&(i, w)| m[(r, i)] * w).sum::<C64>()))
                    .filter(|(_, z)| *z != ZERO)
                    .collect();
                Component { log_weight: c.log_weight, entries }
            })
            .collect()
    }
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.rows();
    let mut s = ZERO;
    for i in 0..n {
        for (k, z) in a.row(i).iter().enumerate() {
            s += z * b[(k, i)];
        }
    }
    s
}

/// `|ω(A α_{t+iβ}(B)) − ω(α_t(B) A)|`. The left side is computed in the
/// eigenbasis of `H_L − μN` with the imaginary-time factors inserted
/// spectrally; the right side by direct conjugation.
pub fn kms_residual(gs: &GibbsState, a: &FullOperator, b: &FullOperator, t: f64) -> Result<f64> {
    kms_residual_under(gs, &gs.generator, &gs.vectors, &gs.components, a, b, t)
}

/// `Σ_c p_c ⟨w_c| Ã C |w_c⟩` with `C_jl = B̃_jl e^{(it−β)(k_j−k_l)}`, each
/// weight `p_c |w_l|` folded into the exponent.
fn kms_lhs(comps: &[Component], k: &[f64], at: &CMatrix, bt: &CMatrix, beta: f64, t: f64) -> C64 {
    let dim = k.len();
    let mut s = ZERO;
    let mut u = vec![ZERO; dim];
    for c in comps {
        u.fill(ZERO);
        for &(i, w) in &c.entries {
            for (j, z) in u.iter_mut().enumerate() {
                *z += w.conj() * at[(i, j)];
            }
        }
        for &(l, x) in &c.entries {
            let lx = c.log_weight + x.norm().ln();
            let phase = x / x.norm();
            for (j, &uj) in u.iter().enumerate() {
                let mag = (lx - beta * (k[j] - k[l])).exp();
                s += uj * bt[(j, l)] * phase * C64::from_polar(mag, t * (k[j] - k[l]));
            }
        }
    }
    s
}

fn kms_residual_under(gs: &GibbsState, k: &[f64], v: &CMatrix, comps: &[Component], a: &FullOperator, b: &FullOperator, t: f64) -> Result<f64> {
    let dim = gs.basis().dim();
    for m in [&a.matrix, &b.matrix] {
        if m.rows() != dim || m.cols() != dim {
            return Err(Error::Dimension(format!("{}x{} operator for a {dim}-dimensional state", m.rows(), m.cols())));
        }
    }
    let at = v.adjoint().matmul(&a.matrix).matmul(v);
    let bt = v.adjoint().matmul(&b.matrix).matmul(v);
    let lhs = kms_lhs(comps, k, &at, &bt, gs.beta, t);
    let ph: Vec<C64> = k.iter().map(|&x| C64::from_polar(1.0, -t * x)).collect();
    let u = conjugate_diag(v, &ph);
    let b_t = u.adjoint().matmul(&b.matrix).matmul(&u);
    let rhs = trace_product(&gs.rho.matrix, &b_t.matmul(&a.matrix));
    Ok((lhs - rhs).norm())
}

fn random_unit_operator(basis: &Arc<FockBasis>, rng: &mut ChaCha8Rng) -> Result<FullOperator> {
    let m = numkit::random_matrix(basis.dim(), basis.dim(), rng);
    let s = numkit::operator_norm(&m);
    FullOperator::new(basis.clone(), m.scale_real(1.0 / s))
}

/// KMS residual of the Gibbs state for random unit-norm `A`, `B` at each `t`,
/// and the same quantity for a perturbed state.
pub fn kms_check(gs: &GibbsState, ts: &[f64], eps: f64, seed: u64) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_unit_operator(gs.basis(), &mut rng)?;
    let b = random_unit_operator(gs.basis(), &mut rng)?;
    let bad = gs.perturbed(eps, seed.wrapping_add(1))?;
    let mut s = Series::new("kms_residual", &["t", "gibbs", "perturbed"]);
    for &t in ts {
        s.push(vec![t, kms_residual(gs, &a, &b, t)?, kms_residual(&bad, &a, &b, t)?]);
    }
    let good = s.column("gibbs").unwrap_or_default().into_iter().fold(0.0, f64::max);
    let det = s.column("perturbed").unwrap_or_default().into_iter().fold(f64::INFINITY, f64::min);
    let mut r = CheckReport::upper("kms", GIBBS_ANCHOR, good, 0.0, KMS_TOL)
        .with_param("beta", gs.beta)
        .with_param("mu", gs.mu)
        .with_param("seed", seed)
        .with_series(s);
    if gs.mu_override {
        r = r.with_note("chemical potential above −V(0) by override");
    }
    Ok(vec![
        r.timed(start),
        CheckReport::lower("kms_detector", GIBBS_ANCHOR, det, KMS_DETECTOR_FLOOR, 0.0).with_param("eps", eps).timed(start),
    ])
}

/// KMS residuals of trapped Gibbs states under the untrapped dynamics, per trap length.
pub fn kms_trend(spec: &HamiltonianSpec, basis: &Arc<FockBasis>, beta: f64, mu: f64, lengths: &[f64], t: f64, seed: u64) -> Result<Series> {
    let untrapped = spec.with_trap(Trap::Infinite);
    let (k, v) = generator_eig(&untrapped, basis, mu)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_unit_operator(basis, &mut rng)?;
    let b = random_unit_operator(basis, &mut rng)?;
    let mut s = Series::new("kms_trend", &["L", "residual"]);
    for &l in lengths {
        let gs = gibbs_state(&spec.with_trap(Trap::finite(l)?), basis, beta, mu, true)?;
        s.push(vec![l, kms_residual_under(&gs, &k, &v, &gs.components_in(&v), &a, &b, t)?]);
    }
    Ok(s)
}

/// `(β, μ, L, ln Z, ω(H_L − μN), ω(N))` per inverse temperature.
pub fn gibbs_sweep(spec: &HamiltonianSpec, basis: &Arc<FockBasis>, betas: &[f64], mu: f64, allow_mu_override: bool) -> Result<Series> {
    let l = match spec.trap {
        Trap::Finite(l) => l,
        Trap::Infinite => f64::INFINITY,
    };
    let mut s = Series::new("gibbs", &["beta", "mu", "L", "log_z", "energy", "number"]);
    for &beta in betas {
        let gs = gibbs_state(spec, basis, beta, mu, allow_mu_override)?;
        s.push(vec![beta, mu, l, gs.log_z, gs.generator_expectation(), gs.number_expectation()]);
    }
    Ok(s)
}

/// `ln Tr e^{−βH}` over the truncated Fock space.
pub fn log_trace_exp(spec: &HamiltonianSpec, basis: &FockBasis, beta: f64) -> Result<f64> {
    let spectra = sector_spectra(spec, basis)?;
    Ok(log_sum_exp(spectra.iter().flatten().map(|e| -beta * e)))
}

/// `Tr e^{−βH_{Lr}} ≤ Tr e^{−βH_{0L}}` with `H_{Lr} = H_L + V(0)N`.
pub fn golden_thompson_check(spec: &HamiltonianSpec, basis: &FockBasis, beta: f64) -> Result<CheckReport> {
    let start = Instant::now();
    if spec.trap == Trap::Infinite {
        return Err(Error::InvalidArgument("partition functions need a finite trap".into()));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("inverse temperature must be positive, got {beta}")));
    }
    let pt = match positive_type_check(&spec.grid, &spec.pair) {
        Ok(p) => p,
        Err(e) => return Ok(CheckReport::skipped("golden_thompson", GOLDEN_THOMPSON_ANCHOR, format!("skipped: {e}")).timed(start)),
    };
    if !pt.accepted {
        let note = format!("skipped: potential is not of positive type (min Fourier coefficient {:e})", pt.min);
        return Ok(CheckReport::skipped("golden_thompson", GOLDEN_THOMPSON_ANCHOR, note).timed(start));
    }
    let tr = log_trace_exp(&renormalize_positive_type(spec), basis, beta)?.exp();
    let tr0 = log_trace_exp(&spec.without_interaction(), basis, beta)?.exp();
    Ok(CheckReport::upper("golden_thompson", GOLDEN_THOMPSON_ANCHOR, tr - tr0, 0.0, GOLDEN_THOMPSON_TOL)
        .with_param("beta", beta)
        .with_param("trace_interacting", tr)
        .with_param("trace_free", tr0)
        .timed(start))
}

/// `L^{−1/2} f(x/L)` on the grid, normalized; rejected if it does not decay
/// to `EDGE_TOL` of its peak at the grid edges.
pub fn rescaled_profile(grid: &Grid, f: &dyn Fn(f64) -> f64, l_scale: f64) -> Result<WaveFn> {
    if !(l_scale > 0.0 && l_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {l_scale}")));
    }
    let amps: Vec<C64> = grid.positions().iter().map(|&x| C64::new(f(x / l_scale) / l_scale.sqrt(), 0.0)).collect();
    let peak = amps.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let edge = amps[0].norm().max(amps[grid.d - 1].norm());
    if peak == 0.0 || edge > EDGE_TOL * peak {
        return Err(Error::InvalidArgument(format!("rescaled profile at scale {l_scale} leaves the grid")));
    }
    WaveFn::new(*grid, amps)?.normalized()
}

#[derive(Clone, Debug)]
pub struct Condensate {
    pub n: usize,
    pub profile: WaveFn,
    /// `(n!)^{−1/2} a*(f_L)ⁿ Ω` as a sector-`n` vector.
    pub state: Vec<C64>,
    /// `⟨Ψ, H₀Ψ⟩` with `H₀ = dΓ(−Δ)`.
    pub energy: f64,
    /// `⟨f_L, −Δ f_L⟩`.
    pub one_body: f64,
}

impl Condensate {
    /// `|⟨Ψ, H₀Ψ⟩ − n⟨f_L, −Δ f_L⟩|`.
    pub fn identity_gap(&self) -> f64 {
        (self.energy - self.n as f64 * self.one_body).abs()
    }
}

pub fn condensate_energy(basis: &FockBasis, grid: &Grid, f: &dyn Fn(f64) -> f64, l_scale: f64, n: usize) -> Result<Condensate> {
    if basis.d() != grid.d {
        return Err(Error::Dimension(format!("{}-mode basis for a {}-site grid", basis.d(), grid.d)));
    }
    if n > basis.nmax() {
        return Err(Error::InvalidArgument(format!("{n} particles above cutoff {}", basis.nmax())));
    }
    let profile = rescaled_profile(grid, f, l_scale)?;
    let c = profile.mode_coeffs();
    let mut psi = basis.vacuum_sector();
    for m in 0..n {
        psi = basis.create_sector(&c, m, &psi)?;
        let s = 1.0 / ((m + 1) as f64).sqrt();
        psi.iter_mut().for_each(|z| *z *= s);
    }
    let free = HamiltonianSpec::free(*grid);
    let h = sector_hamiltonian_sparse(&free, basis, n)?;
    let energy = numkit::inner(&psi, &h.matvec(&psi)).re;
    let one_body = numkit::inner(&c, &free.one_body().matvec(&c)).re;
    Ok(Condensate { n, profile, state: psi, energy, one_body })
}

/// Energy identity at each scale and the ratio of energies per scale doubling.
pub fn condensate_check(basis: &FockBasis, grid: &Grid, f: &dyn Fn(f64) -> f64, scales: &[f64], n: usize) -> Result<Vec<CheckReport>> {
    let start = Instant::now();
    let mut s = Series::new("condensate_energy", &["L", "energy", "identity_gap"]);
    for &l in scales {
        let c = condensate_energy(basis, grid, f, l, n)?;
        s.push(vec![l, c.energy, c.identity_gap()]);
    }
    let gap = s.column("identity_gap").unwrap_or_default().into_iter().fold(0.0, f64::max);
    let e = s.column("energy").unwrap_or_default();
    let mut drift: f64 = 0.0;
    for (w, l) in e.windows(2).zip(scales.windows(2)) {
        if (l[1] / l[0] - 2.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("scales must double".into()));
        }
        drift = drift.max((w[0] / w[1] / 4.0 - 1.0).abs());
    }
    Ok(vec![
        CheckReport::upper("condensate_identity", CONDENSATE_ANCHOR, gap, 0.0, CONDENSATE_TOL).with_param("n", n).timed(start),
        CheckReport::upper("condensate_scaling", CONDENSATE_ANCHOR, drift, CONDENSATE_SCALING_TOL, 0.0)
            .with_param("n", n)
            .with_series(s)
            .timed(start),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{enumerate_basis, global_number};
    use crate::lattice::Potential;

    fn trapped(d: usize, h: f64, pot: Potential, l: f64) -> HamiltonianSpec {
        let g = Grid::periodic(d, h).unwrap();
        HamiltonianSpec::new(g, pot.table(&g).unwrap(), Trap::finite(l).unwrap(), 0.0).unwrap()
    }

    fn gauss() -> Potential {
        Potential::Gaussian { amplitude: 1.0, range: 0.5 }
    }

    #[test]
    fn free_ground_energy_vanishes() {
        let g = Grid::periodic(6, 0.5).unwrap();
        let b = enumerate_basis(6, 2).unwrap();
        for n in 0..=2 {
            assert!(ground_energy(&HamiltonianSpec::free(g), &b, n).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn attractive_well_binds() {
        let g = Grid::periodic(16, 0.5).unwrap();
        let pair = Potential::Squarewell { depth: 2.0, radius: 0.5 }.table(&g).unwrap();
        let spec = HamiltonianSpec::new(g, pair, Trap::Infinite, 0.0).unwrap();
        let b = enumerate_basis(16, 2).unwrap();
        assert!(ground_energy(&spec, &b, 2).unwrap() > 0.0);
        for r in renormalization_check(&spec, &b).unwrap() {
            assert!(r.pass, "{r:?}");
        }
        let full = renormalize(&spec, &b).unwrap();
        assert!(full.min_eigenvalue(&b).unwrap().abs() < 1e-9);
    }

    #[test]
    fn positive_type_examples() {
        let g = Grid::periodic(16, 0.5).unwrap();
        assert!(positive_type_check(&g, &gauss().table(&g).unwrap()).unwrap().accepted);
        let delta = positive_type_check(&g, &Potential::Table { values: vec![1.5] }.table(&g).unwrap()).unwrap();
        assert!(delta.accepted && delta.spectrum.iter().all(|x| (x - 1.5).abs() < 1e-12));
        let cos = Potential::Cosine { amplitude: 1.0, wavelength: 1.0, cutoff: 0.5 };
        assert!(!positive_type_check(&g, &cos.table(&g).unwrap()).unwrap().accepted);
        assert!(positive_type_check(&Grid::new(16, 0.5, false).unwrap(), &PairTable::zero(16)).is_err());
        let spec = HamiltonianSpec::new(g, gauss().table(&g).unwrap(), Trap::Infinite, 0.0).unwrap();
        let b = enumerate_basis(16, 2).unwrap();
        assert!(positive_type_energy_floor(&spec, &b).unwrap() >= -POSITIVITY_TOL);
    }

    #[test]
    fn gibbs_invariants() {
        let spec = trapped(5, 0.5, gauss(), 2.0);
        let b = enumerate_basis(5, 3).unwrap();
        let mu = -spec.pair.v0() - 0.1;
        let gs = gibbs_state(&spec, &b, 1.0, mu, false).unwrap();
        assert!((gs.rho.matrix.trace().re - 1.0).abs() < 1e-12);
        assert!(gs.rho.matrix.is_hermitian(1e-14));
        assert!(numkit::hermitian_eig(&gs.rho.matrix).unwrap().values[0] > -1e-14);
        let n = global_number(&b).unwrap();
        assert!(gs.rho.commutator(&n).norm() < 1e-14);
        assert!(gibbs_state(&spec, &b, 1.0, 0.0, false).is_err());
        assert!(gibbs_state(&spec, &b, 1.0, 0.0, true).unwrap().mu_override);
        assert!(gibbs_state(&spec.with_trap(Trap::Infinite), &b, 1.0, mu, false).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_unit_operator(&b, &mut rng).unwrap();
        let at = gs.evolve(&a, 0.7).unwrap();
        assert!((gs.expectation(&at) - gs.expectation(&a)).norm() < 1e-10);
    }

    #[test]
    fn low_temperature_selects_ground_state() {
        let spec = trapped(5, 0.5, gauss(), 2.0);
        let b = enumerate_basis(5, 2).unwrap();
        let gs = gibbs_state(&spec, &b, 64.0, -spec.pair.v0() - 0.5, false).unwrap();
        assert!(gs.ground_weight() >= 0.999);
        assert!(gs.log_z.is_finite());
    }

    #[test]
    fn partition_function_and_energy_decrease() {
        let spec = trapped(5, 0.5, gauss(), 2.0);
        let b = enumerate_basis(5, 2).unwrap();
        let s = gibbs_sweep(&spec, &b, &[0.25, 0.5, 1.0, 2.0, 4.0], -spec.pair.v0(), false).unwrap();
        let lz = s.column("log_z").unwrap();
        let e = s.column("energy").unwrap();
        assert!(lz.windows(2).all(|w| w[1] < w[0]), "{lz:?}");
        assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
    }

    #[test]
    fn kms_holds_and_detects() {
        let spec = trapped(4, 0.5, gauss(), 1.5);
        let b = enumerate_basis(4, 3).unwrap();
        let gs = gibbs_state(&spec, &b, 1.0, -spec.pair.v0() - 0.2, false).unwrap();
        let reps = kms_check(&gs, &[0.0, 0.5], 0.1, 42).unwrap();
        assert!(reps.iter().all(|r| r.pass), "{reps:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_unit_operator(&b, &mut rng).unwrap();
        let bo = random_unit_operator(&b, &mut rng).unwrap();
        // t = 0 boundary value ω(A α_{iβ}(B)) = ω(BA), with α_{iβ} by direct
        // conjugation; β small enough that e^{βK} stays well conditioned
        let gs0 = gibbs_state(&spec, &b, 0.1, -spec.pair.v0() - 0.2, false).unwrap();
        let up: Vec<C64> = gs0.generator.iter().map(|&k| C64::new((-gs0.beta * k).exp(), 0.0)).collect();
        let down: Vec<C64> = gs0.generator.iter().map(|&k| C64::new((gs0.beta * k).exp(), 0.0)).collect();
        let cont = conjugate_diag(&gs0.vectors, &up).matmul(&bo.matrix).matmul(&conjugate_diag(&gs0.vectors, &down));
        let lhs = trace_product(&gs0.rho.matrix, &a.matrix.matmul(&cont));
        let rhs = gs0.expectation(&FullOperator::new(b.clone(), bo.matrix.matmul(&a.matrix)).unwrap());
        assert!((lhs - rhs).norm() < 1e-10, "{lhs} {rhs}");
        assert!(kms_residual(&gs, &a, &bo, 0.0).unwrap() < 1e-10);
        let r1 = kms_residual(&gs.perturbed(0.05, 7).unwrap(), &a, &bo, 0.5).unwrap();
        let r2 = kms_residual(&gs.perturbed(0.1, 7).unwrap(), &a, &bo, 0.5).unwrap();
        assert!((r2 / r1 - 2.0).abs() < 1e-6, "{r1} {r2}");
    }

    #[test]
    fn kms_trend_reports() {
        let spec = trapped(4, 0.5, gauss(), 2.0);
        let b = enumerate_basis(4, 2).unwrap();
        let s = kms_trend(&spec, &b, 1.0, -2.0, &[1.0, 2.0, 4.0], 0.3, 42).unwrap();
        assert_eq!(s.rows.len(), 3);
        assert!(s.rows.iter().all(|r| r[1].is_finite()));
    }

    #[test]
    fn golden_thompson_examples() {
        let b = enumerate_basis(6, 2).unwrap();
        let free = trapped(6, 0.5, Potential::Zero, 2.0);
        let eq = golden_thompson_check(&free, &b, 1.0).unwrap();
        assert!(eq.pass && eq.value.abs() < 1e-12);
        let spec = trapped(6, 0.5, gauss(), 2.0);
        for beta in [0.25, 1.0, 4.0] {
            let r = golden_thompson_check(&spec, &b, beta).unwrap();
            assert!(r.pass && r.value < 0.0, "{r:?}");
        }
        let cos = trapped(6, 0.5, Potential::Cosine { amplitude: 1.0, wavelength: 1.0, cutoff: 0.5 }, 2.0);
        assert!(golden_thompson_check(&cos, &b, 1.0).unwrap().skipped);
    }

    fn gaussian_profile(x: f64) -> f64 {
        (-x * x / 2.0).exp()
    }

    #[test]
    fn condensate_examples() {
        let g = Grid::new(32, 0.25, false).unwrap();
        let b = enumerate_basis(32, 3).unwrap();
        let one = condensate_energy(&b, &g, &gaussian_profile, 1.0, 1).unwrap();
        assert!(one.identity_gap() < 1e-12);
        assert!((one.energy - one.one_body).abs() < 1e-12);
        let e: Vec<f64> = (1..=3).map(|n| condensate_energy(&b, &g, &gaussian_profile, 1.0, n).unwrap().energy).collect();
        assert!((e[1] - 2.0 * e[0]).abs() < 1e-10 && (e[2] - 3.0 * e[0]).abs() < 1e-10);
        assert!(condensate_energy(&b, &g, &gaussian_profile, 4.0, 1).is_err());
        let reps = condensate_check(&b, &g, &gaussian_profile, &[0.5, 1.0], 2).unwrap();
        assert!(reps.iter().all(|r| r.pass), "{reps:?}");
    }
}
