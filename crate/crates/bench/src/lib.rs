//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use bosefield::numkit::{self, CMatrix};
use bosefield::{FockBasis, Grid, HamiltonianSpec, Potential, SectorOperator, Trap};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(42)
}

pub fn hermitian(n: usize) -> CMatrix {
    numkit::random_hermitian(n, &mut rng())
}

/// Square-well Hamiltonian on a periodic `d`-site grid.
pub fn system(d: usize, nmax: usize) -> (HamiltonianSpec, Arc<FockBasis>) {
    let grid = Grid::periodic(d, 0.5).expect("valid grid");
    let pair = Potential::Squarewell { depth: 1.0, radius: 0.5 }.table(&grid).expect("valid potential");
    let spec = HamiltonianSpec::new(grid, pair, Trap::Infinite, 0.0).expect("valid spec");
    (spec, bosefield::enumerate_basis(d, nmax).expect("basis fits the budget"))
}

pub fn observable(basis: &FockBasis, n: usize) -> SectorOperator {
    SectorOperator { n, block: hermitian(basis.sector_dim(n)) }
}
