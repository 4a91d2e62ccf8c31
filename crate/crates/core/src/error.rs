use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-paraxial domain: {what} (value {value}, limit {limit})")]
    NonParaxial {
        what: &'static str,
        value: f64,
        limit: f64,
    },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("position outside medium domain: {axis} = {value} not in [{min}, {max}]")]
    OutOfDomain {
        axis: char,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("perturbation too strong: sup|zeta| = {sup} exceeds {bound} (10% of n0); pass the regime override to accept")]
    NotWeaklyInhomogeneous { sup: f64, bound: f64 },

    #[error(
        "beam under-resolved: {cells_per_waist:.2} samples per waist (need at least {required})"
    )]
    UnderResolved { cells_per_waist: f64, required: f64 },

    #[error("beam spectrum exceeds grid bandwidth: needs |p| up to {needed:.4}, band limit is {available:.4}")]
    Bandwidth { needed: f64, available: f64 },

    #[error("split step is not stable: forward/backward phase margin {margin:.4} rad (dz = {dz})")]
    UnstableStep { dz: f64, margin: f64 },

    #[error("non-finite field encountered; last good z = {last_good_z}")]
    NanDetected { last_good_z: f64 },

    #[error("step size underflow at z = {z}")]
    StepUnderflow { z: f64 },

    #[error("centroid undefined: component energy {energy:e} below threshold {threshold:e}")]
    UndefinedCentroid { energy: f64, threshold: f64 },

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFinite(_)
            | Error::InvalidInput(_)
            | Error::NotWeaklyInhomogeneous { .. }
            | Error::UnderResolved { .. }
            | Error::Bandwidth { .. }
            | Error::UnstableStep { .. } => ErrorKind::Validation,
            Error::NonParaxial { .. }
            | Error::OutOfDomain { .. }
            | Error::NanDetected { .. }
            | Error::StepUnderflow { .. }
            | Error::UndefinedCentroid { .. } => ErrorKind::Numerical,
            Error::Format(_) | Error::Io(_) => ErrorKind::Io,
        }
    }
}
