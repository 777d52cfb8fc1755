//! Error taxonomy shared by the whole crate.
//!
//! Variants map onto the process exit codes used by the `cmaf` binary:
//! configuration problems exit 2, solver non-convergence exits 3, a breached
//! runtime invariant exits 4 and I/O trouble exits 5.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller supplied an argument outside the documented domain
    /// (e.g. a Sobolev exponent `p <= 1` or a negative derivative count).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two grid-bound objects with different grids were combined.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A rotational-derivative axis outside {0,1,2}.
    #[error("invalid rotation axis {0} (expected 0, 1 or 2)")]
    InvalidAxis(usize),

    /// A leaf metric stopped being positive definite (or an area form
    /// stopped being positive) at some grid node.
    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    /// The right-hand side of a solvability-constrained elliptic problem
    /// fails its compatibility condition.
    #[error("incompatible right-hand side: {0}")]
    IncompatibleRhs(String),

    /// An iterative solve stopped at the iteration cap without reaching
    /// tolerance; the final residual is carried along for diagnostics.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e}, tol {tol:.3e}): {context}")]
    NoConvergence {
        context: String,
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    /// The characteristic evolution of the hypersurface graph blew up.
    #[error("evolution diverged: {0}")]
    EvolutionDiverged(String),

    /// The graph-transform denominator approached zero: the deformed
    /// surface is close to characteristic.
    #[error("near-characteristic surface: {0}")]
    NearCharacteristic(String),

    /// A quantity left the regime in which the scheme is defined
    /// (e.g. the lapse normalisation lost its sign).
    #[error("outside admissible regime: {0}")]
    Regime(String),

    /// A marching-in-u invariant was breached and could not be recovered
    /// by time-step halving.
    #[error("invariant breach: {0}")]
    InvariantBreach(String),

    /// Configuration file / override parsing.
    #[error("config error: {0}")]
    Config(String),

    /// An asymptotic frame could not be orthonormalised against the
    /// round limit (degenerate ell=1 Gram matrix).
    #[error("frame not round: {0}")]
    FrameNotRound(String),

    #[error("unknown quantity name `{0}` in low/high-order decomposition")]
    UnknownQuantity(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    /// Exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            InvalidArgument(_) | GridMismatch(_) | InvalidAxis(_) | Config(_)
            | UnknownQuantity(_) => 2,
            NoConvergence { .. } | EvolutionDiverged(_) | NearCharacteristic(_) => 3,
            DegenerateMetric(_) | IncompatibleRhs(_) | Regime(_) | InvariantBreach(_)
            | FrameNotRound(_) => 4,
            Io(_) | Csv(_) | Serialization(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
