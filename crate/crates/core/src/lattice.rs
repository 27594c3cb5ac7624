//! One-dimensional grids standing in for the single-particle space, with
//! position and momentum operators, wave packets, translations and pair tables.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{CMatrix, C64, ZERO};

/// Uniform grid with points `x_j = (j − d/2)·h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub h: f64,
    pub periodic: bool,
    /// Spatial dimension; always 1.
    pub dim: usize,
}

impl Grid {
    pub fn new(d: usize, h: f64, periodic: bool) -> Result<Grid> {
        if d < 2 {
            return Err(Error::InvalidArgument(format!("grid needs at least 2 points, got {d}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid spacing must be positive, got {h}")));
        }
        Ok(Grid { d, h, periodic, dim: 1 })
    }

    pub fn periodic(d: usize, h: f64) -> Result<Grid> {
        Grid::new(d, h, true)
    }

    /// Grid carrying only the spacing of a mode window; positions are not meaningful.
    pub(crate) fn window(w: usize, h: f64) -> Grid {
        Grid { d: w, h, periodic: false, dim: 1 }
    }

    pub fn x(&self, j: usize) -> f64 {
        (j as f64 - self.d as f64 / 2.0) * self.h
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.d).map(|j| self.x(j)).collect()
    }

    pub fn length(&self) -> f64 {
        self.d as f64 * self.h
    }

    /// Signed cell offset `j − k`, wrapped into `[−d/2, d/2)` on periodic grids.
    pub fn cell_offset(&self, j: usize, k: usize) -> i64 {
        let raw = j as i64 - k as i64;
        if !self.periodic {
            return raw;
        }
        let d = self.d as i64;
        let mut r = raw.rem_euclid(d);
        if r >= d - d / 2 {
            r -= d;
        }
        r
    }

    /// `x_j − x_k` with the minimal-image convention on periodic grids.
    pub fn separation(&self, j: usize, k: usize) -> f64 {
        self.cell_offset(j, k) as f64 * self.h
    }

    /// Displacement of `x_j` from an arbitrary point, minimal image when periodic.
    pub fn displacement(&self, j: usize, center: f64) -> f64 {
        let r = self.x(j) - center;
        if self.periodic {
            let l = self.length();
            r - l * (r / l).round()
        } else {
            r
        }
    }

    /// Discrete momenta `2πm/(dh)` in FFT order, mapped into `(−π/h, π/h]`.
    pub fn momenta(&self) -> Vec<f64> {
        let d = self.d as i64;
        (0..d)
            .map(|m| {
                let mm = if m > d / 2 { m - d } else { m };
                2.0 * PI * mm as f64 / (d as f64 * self.h)
            })
            .collect()
    }
}

/// Smearing function on a grid, stored as point values; `⟨f,g⟩ = h·Σ conj(f_j) g_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveFn {
    pub grid: Grid,
    pub amps: Vec<C64>,
}

impl WaveFn {
    pub fn new(grid: Grid, amps: Vec<C64>) -> Result<WaveFn> {
        if amps.len() != grid.d {
            return Err(Error::Dimension(format!("wave function has {} values on a {}-point grid", amps.len(), grid.d)));
        }
        Ok(WaveFn { grid, amps })
    }

    pub fn zero(grid: Grid) -> WaveFn {
        WaveFn { grid, amps: vec![ZERO; grid.d] }
    }

    /// Normalized function concentrated on site `j`, the `j`-th mode of the Fock basis.
    pub fn mode(grid: Grid, j: usize) -> WaveFn {
        let mut f = WaveFn::zero(grid);
        f.amps[j] = C64::new(1.0 / grid.h.sqrt(), 0.0);
        f
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn inner(&self, other: &WaveFn) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum::<C64>() * self.grid.h
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.inner(self).re - 1.0).abs() <= 1e-12
    }

    pub fn normalized(&self) -> Result<WaveFn> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::InvalidArgument("cannot normalize the zero function".into()));
        }
        Ok(self.scale(C64::new(1.0 / n, 0.0)))
    }

    pub fn scale(&self, s: C64) -> WaveFn {
        WaveFn { grid: self.grid, amps: self.amps.iter().map(|&a| a * s).collect() }
    }

    pub fn add(&self, other: &WaveFn) -> WaveFn {
        WaveFn { grid: self.grid, amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect() }
    }

    /// Expansion coefficients in the orthonormal site modes, `f_j·h^{1/2}`.
    pub fn mode_coeffs(&self) -> Vec<C64> {
        let s = self.grid.h.sqrt();
        self.amps.iter().map(|&a| a * s).collect()
    }

    pub fn from_mode_coeffs(grid: Grid, coeffs: &[C64]) -> WaveFn {
        let s = 1.0 / grid.h.sqrt();
        WaveFn { grid, amps: coeffs.iter().map(|&c| c * s).collect() }
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.amps[j] != ZERO).collect()
    }

    /// Restriction to a list of sites; fails if the function is nonzero elsewhere.
    pub fn restrict_to(&self, window: &[usize]) -> Result<WaveFn> {
        let mut inside = vec![false; self.len()];
        for &j in window {
            inside[j] = true;
        }
        if let Some(j) = (0..self.len()).find(|&j| !inside[j] && self.amps[j] != ZERO) {
            return Err(Error::InvalidArgument(format!("function is nonzero at site {j}, outside the window")));
        }
        Ok(WaveFn { grid: Grid::window(window.len(), self.grid.h), amps: window.iter().map(|&j| self.amps[j]).collect() })
    }

    /// Discrete Fourier coefficients `⟨p_m|f⟩` against orthonormal plane waves, FFT order.
    pub fn momentum_amplitudes(&self) -> Vec<C64> {
        let g = self.grid;
        let c = self.mode_coeffs();
        let norm = 1.0 / (g.d as f64).sqrt();
        g.momenta()
            .iter()
            .map(|&p| {
                (0..g.d).map(|j| C64::from_polar(norm, -p * g.x(j)) * c[j]).sum()
            })
            .collect()
    }
}

/// `−Δ` with the 3-point stencil `(2f_j − f_{j+1} − f_{j−1})/h²`.
pub fn laplacian(grid: &Grid) -> CMatrix {
    let d = grid.d;
    let s = 1.0 / (grid.h * grid.h);
    let mut m = CMatrix::zeros(d, d);
    for j in 0..d {
        m[(j, j)] = C64::new(2.0 * s, 0.0);
        if j + 1 < d {
            m[(j, j + 1)] = C64::new(-s, 0.0);
            m[(j + 1, j)] = C64::new(-s, 0.0);
        }
    }
    if grid.periodic {
        if d == 2 {
            m[(0, 1)] = C64::new(-2.0 * s, 0.0);
            m[(1, 0)] = C64::new(-2.0 * s, 0.0);
        } else {
            m[(0, d - 1)] = C64::new(-s, 0.0);
            m[(d - 1, 0)] = C64::new(-s, 0.0);
        }
    }
    m
}

pub fn position_diag(grid: &Grid) -> CMatrix {
    CMatrix::from_real_diag(&grid.positions())
}

/// Central-difference momentum `−i(f_{j+1} − f_{j−1})/(2h)`.
pub fn momentum_central(grid: &Grid) -> CMatrix {
    let d = grid.d;
    let a = C64::new(0.0, -1.0 / (2.0 * grid.h));
    let mut m = CMatrix::zeros(d, d);
    for j in 0..d {
        let up = if j + 1 < d { Some(j + 1) } else if grid.periodic { Some(0) } else { None };
        if let Some(k) = up {
            m[(j, k)] += a;
            m[(k, j)] -= a;
        }
    }
    m
}

/// Spectral momentum: diagonal in the discrete Fourier basis with values in `(−π/h, π/h]`.
pub fn momentum_spectral(grid: &Grid) -> CMatrix {
    let f = fourier_matrix(grid);
    let k = CMatrix::from_real_diag(&grid.momenta());
    f.adjoint().matmul(&k).matmul(&f)
}

/// Unitary with rows `⟨p_m|` in the orthonormal site basis, FFT order.
pub fn fourier_matrix(grid: &Grid) -> CMatrix {
    let p = grid.momenta();
    let norm = 1.0 / (grid.d as f64).sqrt();
    CMatrix::from_fn(grid.d, grid.d, |m, j| C64::from_polar(norm, -p[m] * grid.x(j)))
}

/// Normalized Gaussian `exp(−r²/(4w²) + ipr)` around `center`, optionally cut to `|r| ≤ radius`.
pub fn wave_packet(grid: &Grid, center: f64, width: f64, momentum: f64, support_radius: Option<f64>) -> Result<WaveFn> {
    if !(width > 0.0) {
        return Err(Error::InvalidArgument(format!("packet width must be positive, got {width}")));
    }
    if let Some(r) = support_radius {
        if r < width {
            return Err(Error::InvalidArgument(format!("support radius {r} is smaller than the width {width}")));
        }
    }
    let amps = (0..grid.d)
        .map(|j| {
            let r = grid.displacement(j, center);
            if support_radius.is_some_and(|rad| r.abs() > rad) {
                ZERO
            } else {
                C64::from_polar((-r * r / (4.0 * width * width)).exp(), momentum * r)
            }
        })
        .collect();
    let f = WaveFn { grid: *grid, amps };
    if f.norm() == 0.0 {
        return Err(Error::InvalidArgument("packet vanishes on the grid after truncation".into()));
    }
    f.normalized()
}

/// Shift by `cells` sites: cyclic on periodic grids, checked on open ones.
pub fn translate(f: &WaveFn, cells: i64) -> Result<WaveFn> {
    let d = f.len() as i64;
    let mut amps = vec![ZERO; f.len()];
    for (j, &a) in f.amps.iter().enumerate() {
        let target = j as i64 + cells;
        let t = if f.grid.periodic {
            target.rem_euclid(d)
        } else if (0..d).contains(&target) {
            target
        } else if a == ZERO {
            continue;
        } else {
            return Err(Error::InvalidArgument(format!("shift by {cells} moves support off the open grid")));
        };
        amps[t as usize] = a;
    }
    Ok(WaveFn { grid: f.grid, amps })
}

/// Site index after a shift by `cells`.
pub fn shift_site(grid: &Grid, j: usize, cells: i64) -> Result<usize> {
    let t = j as i64 + cells;
    let d = grid.d as i64;
    if grid.periodic {
        Ok(t.rem_euclid(d) as usize)
    } else if (0..d).contains(&t) {
        Ok(t as usize)
    } else {
        Err(Error::InvalidArgument(format!("site {j} shifted by {cells} leaves the open grid")))
    }
}

/// Pair potential profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Potential {
    Zero,
    /// `amplitude·exp(−r²/(2·range²))`.
    Gaussian { amplitude: f64, range: f64 },
    /// `−depth` for `|r| ≤ radius`, zero beyond.
    Squarewell { depth: f64, radius: f64 },
    /// `amplitude·cos(2πr/wavelength)` cut off beyond `cutoff`.
    Cosine { amplitude: f64, wavelength: f64, cutoff: f64 },
    /// Values at separations `0, h, 2h, …`; zero beyond the table.
    Table { values: Vec<f64> },
}

impl Potential {
    pub fn eval(&self, r: f64, h: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Gaussian { amplitude, range } => amplitude * (-r * r / (2.0 * range * range)).exp(),
            Potential::Squarewell { depth, radius } => {
                if r.abs() <= radius + 1e-12 * h {
                    -depth
                } else {
                    0.0
                }
            }
            Potential::Cosine { amplitude, wavelength, cutoff } => {
                if r.abs() <= *cutoff {
                    amplitude * (2.0 * PI * r / wavelength).cos()
                } else {
                    0.0
                }
            }
            Potential::Table { values } => {
                let k = (r.abs() / h).round() as usize;
                values.get(k).copied().unwrap_or(0.0)
            }
        }
    }

    pub fn table(&self, grid: &Grid) -> Result<PairTable> {
        pair_potential_table(grid, |r| self.eval(r, grid.h))
    }

    /// Largest separation with nonzero value, if the profile has compact support.
    pub fn range(&self) -> Option<f64> {
        match self {
            Potential::Zero => Some(0.0),
            Potential::Gaussian { .. } => None,
            Potential::Squarewell { radius, .. } => Some(*radius),
            Potential::Cosine { cutoff, .. } => Some(*cutoff),
            Potential::Table { .. } => None,
        }
    }
}

/// Real symmetric table `T_jk = V(x_j − x_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTable {
    pub d: usize,
    values: Vec<f64>,
}

impl PairTable {
    pub fn zero(d: usize) -> PairTable {
        PairTable { d, values: vec![0.0; d * d] }
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.d + k]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn v0(&self) -> f64 {
        self.get(0, 0)
    }

    pub fn as_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.d, self.d, |j, k| C64::new(self.get(j, k), 0.0))
    }
}

/// Tabulates `V(x_j − x_k)`; rejects profiles that are not even on the sampled separations.
pub fn pair_potential_table(grid: &Grid, v: impl Fn(f64) -> f64) -> Result<PairTable> {
    let d = grid.d;
    for m in 0..d as i64 {
        let r = m as f64 * grid.h;
        let (a, b) = (v(r), v(-r));
        if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
            return Err(Error::InvalidArgument(format!("potential is not even: V({r}) = {a}, V({}) = {b}", -r)));
        }
    }
    let mut values = vec![0.0; d * d];
    for j in 0..d {
        for k in 0..d {
            values[j * d + k] = v(grid.separation(j, k));
        }
    }
    Ok(PairTable { d, values })
}
