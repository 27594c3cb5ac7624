//! Closed-form kernel of the trapped single-particle propagator and its
//! comparison with the lattice propagator.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::lattice::{wave_packet, Grid, PairTable, WaveFn};
use crate::numkit::{self, CMatrix, C64};

use super::{HamiltonianSpec, Trap};

const REGULARITY_EPS: f64 = 1e-12;

/// `N_L(τ) = (2πi L² sin(2τ/L²))^{−1/2}` for `e^{−iτH}`, `H = P² + Q²/L⁴`, on
/// the branch continuous in `τ` from `τ = 0⁺`.
pub fn mehler_prefactor(l: f64, tau: f64) -> Result<C64> {
    let w = 2.0 / (l * l);
    let s = (w * tau).sin();
    if s.abs() < REGULARITY_EPS {
        return Err(Error::SingularTime { tau });
    }
    let maslov = (w * tau / PI).floor();
    let phase = -PI / 4.0 - PI / 2.0 * maslov;
    Ok(C64::from_polar(1.0 / (2.0 * PI * l * l * s.abs()).sqrt(), phase))
}

fn forward_kernel(l: f64, tau: f64, x: f64, y: f64) -> Result<C64> {
    let n = mehler_prefactor(l, tau)?;
    let w = 2.0 / (l * l);
    let (s, c) = (w * tau).sin_cos();
    let arg = ((x * x + y * y) * c - 2.0 * x * y) / (2.0 * l * l * s);
    Ok(n * C64::from_polar(1.0, arg))
}

/// Kernel of `e^{iτH}` with `H = P² + Q²/L⁴`.
pub fn mehler_kernel(l: f64, tau: f64, x: f64, y: f64) -> Result<C64> {
    forward_kernel(l, -tau, x, y)
}

/// Kernel of `e^{iτP²}`.
pub fn free_kernel(tau: f64, x: f64, y: f64) -> Result<C64> {
    if tau == 0.0 {
        return Err(Error::SingularTime { tau });
    }
    // forward time −τ
    let t = -tau;
    let mag = 1.0 / (4.0 * PI * t.abs()).sqrt();
    let phase = if t > 0.0 { -PI / 4.0 } else { PI / 4.0 };
    Ok(C64::from_polar(mag, phase + (x - y).powi(2) / (4.0 * t)))
}

/// Probe Gram matrices `⟨u_a, V e^{iτH} V u_b⟩` from the kernel and from the
/// lattice eigendecomposition.
#[derive(Clone, Debug)]
pub struct MehlerComparison {
    pub d: usize,
    pub h: f64,
    pub kernel: CMatrix,
    pub lattice: CMatrix,
    pub gap: f64,
}

/// Smooth probes: Gaussians of width 0.5 at centers `{−1, 0, 1}` with momenta `{−1, 0, 1}`.
pub fn default_probes(grid: &Grid) -> Result<Vec<WaveFn>> {
    let mut out = Vec::new();
    for c in [-1.0, 0.0, 1.0] {
        for p in [-1.0, 0.0, 1.0] {
            out.push(wave_packet(grid, c, 0.5, p, None)?);
        }
    }
    Ok(out)
}

/// Compares both propagator routes on an open grid of `d` sites and spacing `h`,
/// with `V(x) = exp(−x²/2)` as the localizing multiplier.
pub fn mehler_grid_comparison(l: f64, tau: f64, d: usize, h: f64) -> Result<MehlerComparison> {
    mehler_kernel(l, tau, 0.0, 0.0)?;
    let grid = Grid::new(d, h, false)?;
    let xs = grid.positions();
    let vx: Vec<f64> = xs.iter().map(|x| (-x * x / 2.0).exp()).collect();
    let probes = default_probes(&grid)?;
    let weighted: Vec<Vec<C64>> = probes.iter().map(|u| u.amps.iter().zip(&vx).map(|(a, v)| a * v).collect()).collect();
    let k = probes.len();

    let mut kmat = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            kmat[(i, j)] = mehler_kernel(l, tau, xs[i], xs[j])?;
        }
    }
    let kernel = CMatrix::from_fn(k, k, |a, b| {
        let kb = kmat.matvec(&weighted[b]);
        numkit::inner(&weighted[a], &kb) * (h * h)
    });

    let spec = HamiltonianSpec::new(grid, PairTable::zero(d), Trap::finite(l)?, 0.0)?;
    let u = numkit::matrix_function(&spec.one_body(), |e| C64::from_polar(1.0, tau * e))?;
    let lattice = CMatrix::from_fn(k, k, |a, b| numkit::inner(&weighted[a], &u.matvec(&weighted[b])) * h);
    let gap = kernel.max_abs_diff(&lattice);
    Ok(MehlerComparison { d, h, kernel, lattice, gap })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_symmetric() {
        for (x, y) in [(0.3, -1.2), (2.0, 0.5)] {
            let a = mehler_kernel(2.0, 0.3, x, y).unwrap();
            let b = mehler_kernel(2.0, 0.3, y, x).unwrap();
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn singular_times_rejected() {
        let l: f64 = 2.0;
        let tau = PI * l * l / 2.0;
        assert!(matches!(mehler_kernel(l, tau, 0.0, 0.0), Err(Error::SingularTime { .. })));
        assert!(mehler_kernel(l, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn prefactor_free_limit() {
        let tau = 0.4;
        let target = 1.0 / (4.0 * PI * tau).sqrt();
        let gaps: Vec<f64> = [2.0, 4.0, 8.0, 16.0].iter().map(|&l| (mehler_prefactor(l, tau).unwrap().norm() - target).abs()).collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]));
        assert!(gaps[3] < 1e-5);
        let k = mehler_kernel(1e3, tau, 0.2, -0.3).unwrap();
        let f = free_kernel(tau, 0.2, -0.3).unwrap();
        assert!((k - f).norm() < 1e-5);
    }

    #[test]
    fn kernel_composes_like_a_group() {
        // ∫ K_s(x,z) K_t(z,y) dz = K_{s+t}(x,y) by quadrature on a fine line
        let (l, s, t) = (2.0, 0.2, 0.3);
        let (x, y) = (0.4, -0.1);
        let h = 0.002;
        let mut acc = C64::new(0.0, 0.0);
        let mut z = -40.0;
        while z < 40.0 {
            let damp = (-(z / 25.0f64).powi(8)).exp();
            acc += mehler_kernel(l, s, x, z).unwrap() * mehler_kernel(l, t, z, y).unwrap() * h * damp;
            z += h;
        }
        let want = mehler_kernel(l, s + t, x, y).unwrap();
        assert!((acc - want).norm() < 2e-2 * want.norm(), "{acc} vs {want}");
    }

    #[test]
    fn grid_comparison_converges() {
        let coarse = mehler_grid_comparison(2.0, 0.3, 64, 0.125).unwrap();
        let fine = mehler_grid_comparison(2.0, 0.3, 128, 0.0625).unwrap();
        assert!(coarse.gap <= 5e-2, "{}", coarse.gap);
        assert!(fine.gap <= coarse.gap / 2.0, "{} {}", coarse.gap, fine.gap);
    }
}
