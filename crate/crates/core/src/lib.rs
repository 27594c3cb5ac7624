pub mod dynamics;
pub mod error;
pub mod fock;
pub mod lattice;
pub mod numkit;
pub mod report;
pub mod resolvent;
pub mod structure;
pub mod suites;
pub mod thermo;

pub use error::{Error, Result};
pub use fock::{enumerate_basis, FockBasis, FullOperator, LocalOperator, SectorOperator};
pub use lattice::{Grid, Potential, WaveFn};
pub use numkit::{CMatrix, EigenDecomposition, C64};
pub use report::{CheckReport, Series};
pub use dynamics::{HamiltonianSpec, Trap};
pub use suites::{Settings, Suite, SUITES};
