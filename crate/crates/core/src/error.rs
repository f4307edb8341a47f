//! Shared error type for the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Number of optical modes differs between two objects that must agree.
    #[error("mode count mismatch: {left} vs {right}")]
    ModeCountMismatch { left: usize, right: usize },

    /// A matrix operation received a non-square or wrongly sized matrix.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A parameter vector has the wrong length for the requested dimension.
    #[error("parameter vector length {got}, expected {expected}")]
    ParamLength { expected: usize, got: usize },

    /// A matrix flagged (or required to be) unitary fails the unitarity check.
    #[error("matrix is not unitary: max |U\u{2020}U - I| = {deviation:.3e}")]
    NotUnitary { deviation: f64 },

    /// A matrix required to be a contraction has a singular value above 1.
    #[error("matrix is not a contraction: largest singular value = {sigma_max}")]
    NotAContraction { sigma_max: f64 },

    /// Singular-value ratio of the zero matrix is undefined.
    #[error("singular-value ratio undefined for the zero matrix")]
    ZeroMatrix,

    /// The projected output state has (numerically) zero norm, so fidelity
    /// is undefined. Distinct from fidelity = 0.
    #[error("degenerate output state: squared norm {norm_sqr:.3e} below threshold")]
    DegenerateOutput { norm_sqr: f64 },

    /// A dual-rail layout does not partition the device modes.
    #[error("invalid dual-rail layout: {0}")]
    Layout(String),

    /// A state recipe string or definition could not be used.
    #[error("invalid state recipe: {0}")]
    Recipe(String),

    /// An experiment specification is internally inconsistent.
    #[error("invalid experiment spec: {0}")]
    Spec(String),
}
