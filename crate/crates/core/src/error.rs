//! Error type shared by the engine modules.

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("mode index {mode} out of range for {num_modes}-mode state")]
    ModeOutOfRange { mode: usize, num_modes: usize },

    #[error("duplicate mode index {mode} in rail list")]
    RailCollision { mode: usize },

    #[error("transmissivity {0} outside [0, 1]")]
    InvalidTransmissivity(f64),

    #[error("efficiency {0} outside [0, 1]")]
    InvalidEfficiency(f64),

    #[error("mean photon number {0} must be >= 0")]
    InvalidMeanPhotonNumber(f64),

    #[error("dark-click probability {0} outside [0, 1)")]
    InvalidDarkProbability(f64),

    #[error("pair_terms_max must be >= 1")]
    InvalidPairTerms,

    /// A beam splitter drove some mode past the per-mode cutoff.
    #[error("per-mode cutoff {cutoff} exceeded (needed {needed}); est. dropped weight {dropped_weight:e}")]
    CutoffExceeded {
        cutoff: u8,
        needed: u16,
        dropped_weight: f64,
    },

    /// A tensor product exceeded the global photon bound.
    #[error("global photon bound {bound} exceeded (needed {needed}); est. dropped weight {dropped_weight:e}")]
    PhotonBoundExceeded {
        bound: u16,
        needed: u16,
        dropped_weight: f64,
    },

    #[error("operation undefined on a zero-trace ensemble")]
    ZeroTrace,

    #[error("QBER undefined: endpoint post-selection probability is zero")]
    UndefinedQber,

    #[error("reference state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),

    #[error("state has {actual} modes, expected {expected}")]
    ModeCountMismatch { expected: usize, actual: usize },

    #[error("dense basis dimension {dim} exceeds budget {max}")]
    BasisTooLarge { dim: usize, max: usize },

    #[error("dense operator dimension mismatch: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },

    #[error("chain must have at least one link")]
    NoLinks,

    #[error("tree swap order requires a power-of-two link count, got {0}")]
    TreeOrderNotPowerOfTwo(usize),

    #[error("rate vanishes across the whole bracket; no optimum")]
    NoOptimum,
}
