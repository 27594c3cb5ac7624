//! Interaction-picture pair potentials, removal of the trap, asymptotic
//! commutativity and the free asymptotic particle observable.

use std::f64::consts::PI;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::fock::{LocalOperator, SectorOperator};
use crate::lattice::{fourier_matrix, momentum_spectral, Grid, Potential, WaveFn};
use crate::numkit::{self, CMatrix, C64, ZERO};
use crate::report::{strictly_decreasing, CheckReport, Series};
use crate::structure::Evolution;

use super::{sector_hamiltonian_sparse, HamiltonianSpec, SectorDynamics, Trap};

/// `e^{isH₀} V(Q_j − Q_k) e^{−isH₀}` on the two-particle tensor space `C^d ⊗ C^d`,
/// with `H₀` the one-body part of `spec` acting on both slots.
pub fn interaction_potential_t(spec: &HamiltonianSpec, s: f64) -> Result<CMatrix> {
    let d = spec.grid.d;
    let u = numkit::matrix_function(&spec.one_body(), |e| C64::from_polar(1.0, s * e))?;
    // M = (U⊗U) diag(V) (U⊗U)†, applied slot by slot
    let dim = d * d;
    let mut m = CMatrix::zeros(dim, dim);
    let uc = u.adjoint();
    for r in 0..dim {
        let (a, b) = (r / d, r % d);
        let v = spec.pair.get(a, b);
        if v == 0.0 {
            continue;
        }
        for c in 0..dim {
            let (x, y) = (c / d, c % d);
            m[(r, c)] = uc[(a, x)] * uc[(b, y)] * v;
        }
    }
    let mut out = CMatrix::zeros(dim, dim);
    for a in 0..d {
        for b in 0..d {
            let row = a * d + b;
            for x in 0..d {
                let ux = u[(a, x)];
                if ux == ZERO {
                    continue;
                }
                for y in 0..d {
                    let w = ux * u[(b, y)];
                    if w == ZERO {
                        continue;
                    }
                    let src = m.row(x * d + y);
                    for (o, z) in out.row_mut(row).iter_mut().zip(src) {
                        *o += w * z;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `(c_L(s), s_L(s)) = (cos(2s/L²), L² sin(2s/L²))`, or `(1, 2s)` without trap.
pub fn trap_coefficients(trap: Trap, s: f64) -> (f64, f64) {
    match trap {
        Trap::Infinite => (1.0, 2.0 * s),
        Trap::Finite(l) => {
            let w = 2.0 * s / (l * l);
            (w.cos(), l * l * w.sin())
        }
    }
}

/// `V(c_L(s) q + s_L(s) π)` on the relative coordinate `q = Q_j − Q_k` sampled
/// on `grid`, where `π = P_j − P_k` acts as twice the spectral momentum.
pub fn interaction_potential_relative(grid: &Grid, potential: &Potential, trap: Trap, s: f64) -> Result<CMatrix> {
    let (c, sl) = trap_coefficients(trap, s);
    let q: Vec<f64> = (0..grid.d).map(|j| grid.x(j)).collect();
    let x = &CMatrix::from_real_diag(&q).scale_real(c) + &momentum_spectral(grid).scale_real(2.0 * sl);
    numkit::matrix_function(&x.hermitian_part(), |r| C64::new(potential.eval(r, grid.h), 0.0))
}

/// `‖(∫₀ᵗ V(s) ds) P_{|p|≥p_c}‖` against `‖t·V(0) P_{|p|≥p_c}‖` for each cutoff,
/// with the closed form on the relative coordinate.
pub fn averaged_potential_profile(grid: &Grid, potential: &Potential, trap: Trap, t: f64, cutoffs: &[f64], steps: usize) -> Result<Series> {
    if steps < 2 || steps % 2 != 0 {
        return Err(Error::InvalidArgument(format!("Simpson needs an even number of steps, got {steps}")));
    }
    let d = grid.d;
    let mut avg = CMatrix::zeros(d, d);
    if t != 0.0 {
        let h = t / steps as f64;
        for j in 0..=steps {
            let w = if j == 0 || j == steps { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
            avg += &interaction_potential_relative(grid, potential, trap, j as f64 * h)?.scale_real(w * h / 3.0);
        }
    }
    let inst = interaction_potential_relative(grid, potential, trap, 0.0)?.scale_real(t);
    let f = fourier_matrix(grid);
    let p = grid.momenta();
    let mut s = Series::new("averaged_potential", &["p_cutoff", "averaged", "instantaneous"]);
    for &pc in cutoffs {
        let mask: Vec<f64> = p.iter().map(|&x| if x.abs() >= pc { 1.0 } else { 0.0 }).collect();
        let proj = f.adjoint().matmul(&CMatrix::from_real_diag(&mask)).matmul(&f);
        s.push(vec![pc, numkit::operator_norm(&avg.matmul(&proj)), numkit::operator_norm(&inst.matmul(&proj))]);
    }
    Ok(s)
}

pub const TRAP_ANCHOR: &str = "removal of the harmonic trap";

/// `‖α_L(t)(A) − α(t)(A)‖_n` over trap lengths; passes when strictly decreasing.
pub fn trap_removal(untrapped: &HamiltonianSpec, a: &SectorOperator, t: f64, lengths: &[f64]) -> Result<CheckReport> {
    let start = Instant::now();
    if untrapped.trap != Trap::Infinite {
        return Err(Error::InvalidArgument("reference dynamics must be untrapped".into()));
    }
    let n = a.n;
    let basis = crate::fock::enumerate_basis(untrapped.grid.d, n)?;
    if a.dim() != basis.sector_dim(n) {
        return Err(Error::Dimension(format!("operator of size {} on sector {n}", a.dim())));
    }
    let evolve = |spec: &HamiltonianSpec| -> Result<CMatrix> {
        let h = sector_hamiltonian_sparse(spec, &basis, n)?.to_dense();
        let u = numkit::hermitian_eig(&h)?.apply(|e| C64::from_polar(1.0, -t * e))?;
        Ok(u.adjoint().matmul(&a.block).matmul(&u))
    };
    let reference = evolve(untrapped)?;
    let mut s = Series::new("trap_removal", &["L", "gap"]);
    for &l in lengths {
        let trapped = evolve(&untrapped.with_trap(Trap::finite(l)?))?;
        s.push(vec![l, numkit::operator_norm(&(&trapped - &reference))]);
    }
    let gaps = s.column("gap").unwrap_or_default();
    let ok = if t == 0.0 { gaps.iter().all(|&g| g <= 1e-12) } else { strictly_decreasing(&gaps) };
    Ok(CheckReport::predicate("trap_removal", TRAP_ANCHOR, ok)
        .with_param("n", n)
        .with_param("t", t)
        .with_param("final_gap", gaps.last().copied().unwrap_or(f64::NAN))
        .with_series(s)
        .timed(start))
}

pub const COMMUTATOR_ANCHOR: &str = "asymptotic commutativity of translated evolved observables";

/// `‖[α(t,x)(A), B]‖_n` for each translation `x` (in cells), with `A` translated
/// first and then evolved. Computed as `‖[A_x, α(−t)(B)]‖_n`.
pub fn asymptotic_commutator(dynamics: &SectorDynamics, a: &LocalOperator, b: &LocalOperator, t: f64, xs: &[i64], n: usize) -> Result<Series> {
    let basis = dynamics.basis().clone();
    let grid = dynamics.spec.grid;
    let dim = basis.sector_dim(n);
    let bn = b.restrict(&basis, n)?.block;
    let x = if t == 0.0 {
        bn
    } else {
        let u = dynamics.propagator(n, t)?;
        // α(−t)(B) = e^{−itH} B e^{itH}
        u.matmul(&bn).matmul(&u.adjoint())
    };
    let xa = x.adjoint();
    let mut s = Series::new("asymptotic_commutator", &["translation", "norm"]);
    for &cells in xs {
        let ax = a.translate(&grid, cells)?;
        let axd = ax.adjoint();
        let apply = |v: &[C64]| -> Vec<C64> {
            let c = |w: &[C64]| -> Vec<C64> {
                let l = ax.apply_sector(&basis, n, &x.matvec(w)).expect("checked sector");
                let r = x.matvec(&ax.apply_sector(&basis, n, w).expect("checked sector"));
                l.into_iter().zip(r).map(|(p, q)| p - q).collect()
            };
            let cv = c(v);
            let l = xa.matvec(&axd.apply_sector(&basis, n, &cv).expect("checked sector"));
            let r = axd.apply_sector(&basis, n, &xa.matvec(&cv)).expect("checked sector");
            l.into_iter().zip(r).map(|(p, q)| p - q).collect()
        };
        let top = numkit::top_eigenvalue_lanczos(dim, apply);
        s.push(vec![cells as f64, top.max(0.0).sqrt()]);
    }
    Ok(s)
}

/// `c_s` in the discrete continuum-normalized convention below.
pub const SENSITIVITY_CONSTANT: f64 = 2.0 * PI;

/// `⟨p|A₀|p⟩ = (h/2π) Σ_jk e^{−ip(x_j−x_k)} A_jk` for a one-body matrix `A₀`
/// in the site-mode basis, at the grid momenta in FFT order.
pub fn sensitivity(grid: &Grid, a0: &CMatrix) -> Vec<f64> {
    let f = fourier_matrix(grid);
    let diag = f.matmul(a0).matmul(&f.adjoint()).diag();
    diag.iter().map(|z| z.re * grid.d as f64 * grid.h / (2.0 * PI)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsymptoticValues {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub relative_gap: f64,
}

/// Scaled average of the freely evolved, translated `A₀` against the
/// sensitivity-weighted momentum distribution of `ψ`:
/// `lhs = h Σ_x v(x/t) ⟨ψ|α⁰(t,x)(A₀)|ψ⟩`, `rhs = c_s Σ_p v(2p) ⟨p|A₀|p⟩ |ψ̃(p)|²`.
pub fn free_asymptotic_observable(a0: &CMatrix, profile: &dyn Fn(f64) -> f64, t: f64, psi: &WaveFn, c_s: f64) -> Result<AsymptoticValues> {
    let grid = psi.grid;
    if t == 0.0 {
        return Err(Error::InvalidArgument("the asymptotic scaling needs t ≠ 0".into()));
    }
    if !grid.periodic {
        return Err(Error::InvalidArgument("translations need a periodic grid".into()));
    }
    let d = grid.d;
    if a0.rows() != d || a0.cols() != d {
        return Err(Error::Dimension(format!("one-body operator must be {d}x{d}")));
    }
    let spec = HamiltonianSpec::free(grid);
    let u = numkit::matrix_function(&spec.one_body(), |e| C64::from_polar(1.0, -t * e))?;
    let psi_t = u.matvec(&psi.mode_coeffs());
    let entries: Vec<(usize, usize, C64)> =
        (0..d).flat_map(|j| (0..d).map(move |k| (j, k))).filter(|&(j, k)| a0[(j, k)] != ZERO).map(|(j, k)| (j, k, a0[(j, k)])).collect();
    let mut lhs = 0.0;
    for m in 0..d {
        let cells = m as i64 - (d / 2) as i64;
        let w = profile(cells as f64 * grid.h / t);
        if w == 0.0 {
            continue;
        }
        // ⟨ψ_t| T_x A T_x† |ψ_t⟩ with (T_x† ψ)_j = ψ_{j+x}
        let shift = |j: usize| (j as i64 + cells).rem_euclid(d as i64) as usize;
        let val: C64 = entries.iter().map(|&(j, k, a)| psi_t[shift(j)].conj() * a * psi_t[shift(k)]).sum();
        lhs += w * val.re * grid.h;
    }
    let sens = sensitivity(&grid, a0);
    let amps = psi.momentum_amplitudes();
    let rhs: f64 = c_s * grid.momenta().iter().zip(&sens).zip(&amps).map(|((&p, &sv), z)| profile(2.0 * p) * sv * z.norm_sqr()).sum::<f64>();
    let gap = (lhs - rhs).abs();
    let relative_gap = if rhs.abs() > 0.0 { gap / rhs.abs() } else if gap == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(AsymptoticValues { lhs, rhs, gap, relative_gap })
}

/// Fits `c_s` from the unit velocity profile, where both sides are exact sums.
pub fn fit_sensitivity_constant(a0: &CMatrix, psi: &WaveFn) -> Result<f64> {
    let v = free_asymptotic_observable(a0, &|_| 1.0, 1.0, psi, 1.0)?;
    if v.rhs == 0.0 {
        return Err(Error::InvalidArgument("observable has zero sensitivity on this state".into()));
    }
    Ok(v.lhs / v.rhs)
}
