use num_bigint::BigUint;
use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// `value` has no inverse modulo `modulus`. The gcd is a divisor of the
    /// modulus and is often a usable factor.
    #[error("{value} is not invertible modulo {modulus} (gcd {gcd})")]
    NotInvertible {
        value: BigUint,
        modulus: BigUint,
        gcd: BigUint,
    },

    /// An operation that needs a unit (orders, closed forms) got a value
    /// sharing the factor `gcd` with the modulus.
    #[error("{value} is not coprime to {modulus} (gcd {gcd})")]
    NotCoprime {
        value: BigUint,
        modulus: BigUint,
        gcd: BigUint,
    },

    /// Work exceeded a configured bound (trial-division limit, register width).
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// The probabilistic backend did not produce a verified period. Retrying
    /// with a different seed may succeed.
    #[error("period finding failed after {attempts} attempts")]
    BackendFailure { attempts: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// The shared divisor carried by inversion and coprimality failures.
    pub fn shared_divisor(&self) -> Option<&BigUint> {
        match self {
            Error::NotInvertible { gcd, .. } | Error::NotCoprime { gcd, .. } => Some(gcd),
            _ => None,
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::BackendFailure { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
