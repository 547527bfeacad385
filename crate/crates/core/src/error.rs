use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("Fock dimension {0} is too small (need at least 2)")]
    FockDimTooSmall(usize),

    #[error("displacement |alpha|^2 = {norm_sq:.4} exceeds the truncation guard {limit:.4} for N = {fock_dim}")]
    DisplacementGuard {
        norm_sq: f64,
        limit: f64,
        fock_dim: usize,
    },

    #[error("squeezing r = {r} outside the allowed range [0, {limit}]")]
    SqueezeGuard { r: f64, limit: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid grid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid logical frame: {0}")]
    InvalidFrame(String),

    #[error("invalid sequence: {0}")]
    InvalidSequence(String),

    #[error("negative duration {0} s")]
    NegativeDuration(f64),

    #[error("integrator did not converge: halving the step moved `{observable}` by {shift:.3e} (tolerance {tolerance:.1e})")]
    NonConvergence {
        observable: &'static str,
        shift: f64,
        tolerance: f64,
    },

    #[error("zero-probability branch: {0}")]
    ZeroProbability(String),

    #[error("invalid scan: {0}")]
    InvalidScan(String),

    #[error("invalid tomography data: {0}")]
    InvalidTomography(String),
}
