use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("degenerate domain: {0}")]
    DegenerateDomain(&'static str),
    #[error("grid too large: {nodes} cells exceed the {limit} cap")]
    GridTooLarge { nodes: usize, limit: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("no center of the lattice hits the domain")]
    EmptyLattice,
    #[error("scale {0} is not compatible with the unit-ball lattice")]
    IncompatibleScale(f64),
    #[error("exponent arithmetic violated: {0}")]
    ExponentMismatch(&'static str),
    #[error("decomposition does not reconstruct the drift (defect {0:e})")]
    Reconstruction(f64),
    #[error("divergence sign condition violated: min div b1 = {0:e}")]
    SignCondition(f64),
    #[error("mollifier radius {rho} is below two grid spacings ({h})")]
    UnresolvedKernel { rho: f64, h: f64 },
    #[error("test function does not vanish on the boundary band")]
    TestFunctionSupport,
    #[error("operator is near singular at lambda = {lambda}: sigma_min ~ {sigma:e} (norm {norm:e})")]
    NearSingular { lambda: f64, sigma: f64, norm: f64 },
    #[error("iterative solver stalled after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}
