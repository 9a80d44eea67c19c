use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("enumeration infeasible: {hidden} hidden units exceeds the cap of {cap}")]
    EnumerationInfeasible { hidden: usize, cap: usize },

    #[error("sampler state is uninitialised")]
    UninitializedSampler,

    #[error("matrix is singular or nearly singular ({0})")]
    Singular(&'static str),

    #[error("covariance is rank deficient: eigenvalue {eigenvalue:e} below floor {floor:e}")]
    RankDeficient { eigenvalue: f64, floor: f64 },

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            actual,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::EnumerationInfeasible { .. }
                | Error::Singular(_)
                | Error::RankDeficient { .. }
                | Error::ZeroVariance(_)
                | Error::NonFinite(_)
        )
    }
}

pub(crate) fn ensure_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::dims(context, expected, actual))
    }
}
