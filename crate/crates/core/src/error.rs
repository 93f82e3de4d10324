use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (smallest eigenvalue {0:.6e})")]
    NotPositiveDefinite(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("grid for coordinate {0} is empty or has fewer than 2 points")]
    EmptyGrid(usize),
    #[error("Hamiltonian is not finite at grid point {0:?}")]
    NonFiniteHamiltonian(Vec<f64>),
    #[error("coordinate index {index} out of range 1..={dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("value {value} for coordinate {index} is not a grid point")]
    PointNotOnGrid { index: usize, value: f64 },
    #[error("density variants do not match ({0})")]
    VariantMismatch(&'static str),
    #[error("weighting support does not match the conditional families ({0})")]
    SupportMismatch(&'static str),
    #[error("problem size {got} exceeds the exact-enumeration cap {cap}")]
    SizeLimitExceeded { got: usize, cap: usize },
    #[error("transport marginals infeasible: masses differ by {0:.3e}")]
    InfeasibleMarginals(f64),
    #[error("matrix square root intermediate has eigenvalue {0:.3e} below -1e-10")]
    NonPsdIntermediate(f64),
    #[error("mixed partials unavailable: grid Hamiltonian is tabulated only")]
    PartialsUnavailable,
    #[error("conditional law has single-point support at coordinate {0}")]
    DegenerateSpec(usize),
    #[error("delta {0} outside the admissible range (0, 1]")]
    DeltaOutOfRange(f64),
    #[error("hypotheses not certified: {0}")]
    NotCertified(String),
    #[error("convexity constant must be positive, got {0}")]
    NonPositiveConvexity(f64),
    #[error("distance between the inputs is zero; contraction factor undefined")]
    ZeroDistance,
    #[error("expression parse error at byte {pos}: {msg}")]
    ExprSyntax { pos: usize, msg: String },
    #[error("unknown variable `{0}` in Hamiltonian expression")]
    UnknownVariable(String),
    #[error("unknown function `{0}` in Hamiltonian expression")]
    UnknownFunction(String),
    #[error("transport simplex failed to converge")]
    SimplexStalled,
}

pub type Result<T> = std::result::Result<T, Error>;
