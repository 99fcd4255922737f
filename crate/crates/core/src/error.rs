use thiserror::Error;

/// Errors shared by all engines and field operations.
#[derive(Debug, Error)]
pub enum QhdError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("validation: {0}")]
    Validation(String),

    /// A phase jump close to pi was found between two points that both carry
    /// density above the floor. This is the signature of a node crossing, where
    /// the phase sheet is not continuable.
    #[error("phase unwrap ambiguous at flat index {index}: |jump| = {jump:.6} rad between above-floor points")]
    UnwrapAmbiguous { index: usize, jump: f64 },

    #[error("every grid point is below the density floor")]
    AllMasked,

    #[error("density below floor at {count} points (min rho = {min_rho:.3e}, floor = {floor:.3e})")]
    FloorViolation {
        count: usize,
        min_rho: f64,
        floor: f64,
    },

    #[error("wavenumber k = {k:.12} is not commensurate with box length {length:.12}")]
    Commensurability { k: f64, length: f64 },

    #[error("state left the finite range at step {step}")]
    NonFinite { step: usize },

    #[error("node formation at step {step}: min rho = {min_rho:.3e} fell below floor {floor:.3e}")]
    NodeFormation {
        step: usize,
        min_rho: f64,
        floor: f64,
    },

    #[error("imaginary-time iteration did not converge within {steps} steps")]
    NoConvergence { steps: usize },

    #[error("time series too short: {len} snapshots, need at least 3")]
    SeriesTooShort { len: usize },

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QhdError>;
