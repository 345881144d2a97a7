//! Error types shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A quantity left its mathematical domain (negative variance, z <= 0, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// An argument fell outside its admissible range.
    #[error("range error: {0}")]
    Range(String),

    /// n = sum theta_k: the competition weights absorb the whole market and the
    /// n-insurer equilibrium does not exist.
    #[error("degenerate competition: n = {n} equals the sum of competition weights {theta_sum}")]
    DegenerateCompetition { n: usize, theta_sum: f64 },

    /// E[theta] = 1 for the type distribution: the mean-field equilibrium does not exist.
    #[error("mean-field equilibrium does not exist: E[theta] = 1")]
    DegenerateMeanField,

    /// The linear system for the unconstrained reinsurance proportions is singular.
    #[error("singular reinsurance system: denominator {denominator} <= 0 at t = {t}")]
    SingularSystem { t: f64, denominator: f64 },

    /// A fixed-point iteration did not reach its tolerance within the iteration cap.
    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e}, tol {tol:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    /// An integrated quantity exceeded its growth guard, or became non-finite.
    #[error("blow-up detected at t = {t}: |value| = {value:e} exceeds guard {guard:e}")]
    BlowUp { t: f64, value: f64, guard: f64 },

    /// Arrays that must share a time grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Configuration is malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// Hard validity failure (Feller condition, degenerate competition, ...).
    #[error("validity failure: {0}")]
    Validity(String),

    /// Requested storage exceeds the configured memory guard.
    #[error("memory guard: simulation would store {cells} cells, guard is {guard}")]
    MemoryGuard { cells: usize, guard: usize },

    /// A computed sequence violated an invariant it is required to satisfy.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
