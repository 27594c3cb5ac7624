use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max asymmetry {asymmetry:.3e}")]
    NotHermitian { asymmetry: f64 },
    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal mass {residual:.3e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("function not finite at eigenvalue {eigenvalue}")]
    Domain { eigenvalue: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("memory budget exceeded: need {required} bytes, budget is {budget} bytes")]
    Budget { required: u64, budget: u64 },
    #[error("operator does not conserve particle number (largest off-sector entry {leak:.3e})")]
    NotConserving { leak: f64 },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("quadrature did not converge: Cauchy gap {gap:.3e} at {nodes} nodes")]
    Quadrature { gap: f64, nodes: usize },
    #[error("linear system is rank deficient: rank {rank} of {size}, residual {residual:.3e}")]
    RankDeficient { rank: usize, size: usize, residual: f64 },
    #[error("singular time {tau}: 2τ is a multiple of πL²")]
    SingularTime { tau: f64 },
    #[error("stale propagator cache: built for a different Hamiltonian")]
    StaleCache,
}

pub type Result<T> = std::result::Result<T, Error>;
