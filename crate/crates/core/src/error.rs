use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("equilibrium solve did not converge after {iterations} iterations (residual {residual:.3e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("mode index {mode} out of range for a chain of {n_ions} ions")]
    ModeIndex { mode: usize, n_ions: usize },

    #[error("mode {mode} is not active in the basis")]
    InactiveMode { mode: usize },

    #[error("basis mismatch: {context}")]
    BasisMismatch { context: String },

    #[error("ion count mismatch: basis has {basis} ions, mode table has {modes}")]
    IonCountMismatch { basis: usize, modes: usize },

    #[error("basis has no phonon mode")]
    NoPhononMode,

    #[error("Fock cutoff overflow on mode {mode}: occupation would exceed cutoff {cutoff}")]
    CutoffOverflow { mode: usize, cutoff: usize },

    #[error("Krylov propagation did not reach tolerance {requested:.3e} (achieved residual {achieved:.3e})")]
    KrylovConvergence { requested: f64, achieved: f64 },

    #[error("initial state is stationary under the Hamiltonian")]
    StationaryState,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("protocol parse error at line {line}: {message}")]
    ProtocolParse { line: usize, message: String },

    #[error("state file format error: {0}")]
    StateFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
