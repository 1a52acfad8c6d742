//! Error type shared by all solver modules.

/// Errors produced by the solvers in this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Pivoting found no pivot above the relative threshold; the system has
    /// no reliable solution (rank deficiency or inconsistent inputs).
    #[error("matrix is numerically singular (no acceptable pivot in column {column})")]
    SingularMatrix { column: usize },

    #[error("block is not substochastic: row {row} sums to {sum}")]
    NotSubstochastic { row: usize, sum: f64 },

    #[error("matrix is not stochastic: row {row} sums to {sum}")]
    NotStochastic { row: usize, sum: f64 },

    /// The chain has period > 1, so the deviation matrix does not exist.
    #[error("chain is periodic with period {period}")]
    PeriodicChain { period: usize },

    #[error(
        "residual norm {norm:.3e} exceeds tolerance {tol:.3e}; tighten epsilon or raise max_levels"
    )]
    ResidualTooLarge { norm: f64, tol: f64 },

    #[error("anchor state {alpha} is not contained in the censor set")]
    AnchorNotInA { alpha: usize },

    #[error("no convergence after {iterations} iterations (last step {delta:.3e})")]
    NoConvergence { iterations: usize, delta: f64 },

    /// I - Psi0 is singular, which signals an invalid G matrix.
    #[error("I - Psi0 is numerically singular")]
    SingularPsi,

    #[error("spectral radius of R is {rho:.6} >= 1; the chain is not positive recurrent")]
    UnstableR { rho: f64 },

    #[error("stationary tail mass {deficit:.3e} exceeds bound {bound:.3e}; increase max_levels")]
    TailMassTooLarge { deficit: f64, bound: f64 },

    #[error("row-sum assumptions violated: {0}")]
    StochasticityViolation(String),

    #[error("pi^T|g| = {value:.3e} exceeds the overflow guard")]
    DivergentForcing { value: f64 },

    #[error("simulation path {path} did not reach the anchor within {max_steps} steps")]
    PathBudgetExceeded { path: usize, max_steps: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for errors caused by malformed or inconsistent inputs, as opposed
    /// to numerical failures encountered while solving. The CLI maps the two
    /// classes to different exit codes.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::NotSubstochastic { .. }
                | Error::NotStochastic { .. }
                | Error::AnchorNotInA { .. }
                | Error::StochasticityViolation(_)
                | Error::InvalidInput(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
