use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("admissibility exponent violates p > 1/(1 - beta): p = {p}, required > {bound}")]
    AdmissibilityExponent { p: f64, bound: f64 },

    #[error("eigenvalues must be finite, nonnegative and nondecreasing (index {index})")]
    UnsortedEigenvalues { index: usize },

    #[error("kernel bound violated at mode {mode}, s = {s:e}: |e^(-mu s) g| = {lhs:e} > {rhs:e}")]
    KernelBound { mode: usize, s: f64, lhs: f64, rhs: f64 },

    #[error("smoothing condition requires nondegenerate diagonal noise (sigma_{mode} = 0)")]
    DegenerateNoise { mode: usize },

    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),

    #[error("smoothing representation undefined at t = 0")]
    ZeroTime,

    #[error("invalid time grid: {0}")]
    TimeGrid(String),

    #[error("control outside the admissible set: {0}")]
    InadmissibleControl(String),

    #[error("unsupported scheme: {0}")]
    UnsupportedScheme(String),

    #[error("hamiltonian may be -infinity: {0}")]
    UnboundedHamiltonian(String),

    #[error("contraction constant {constant:.4} >= 1: lambda below solvable threshold")]
    NotContractive { constant: f64 },

    #[error("fixed point not reached after {iterations} iterations (last change {change:e})")]
    MaxIterations { iterations: usize, change: f64 },

    #[error("point outside the value grid: {0}")]
    OutsideGrid(String),

    #[error("assumption audit failed: {0}")]
    AuditFailed(String),

    #[error("malformed configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("{what}: length {got}, expected {want}")))
    }
}
