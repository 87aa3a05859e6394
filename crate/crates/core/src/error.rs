use std::io;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} bits, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("bucket {bucket} is full")]
    Overflow { bucket: usize },

    #[error("enrollment rejected: bucket {bucket} has no free slot")]
    EnrollmentRejected { bucket: usize },

    #[error("exponent is zero modulo the group order")]
    DegenerateExponent,

    #[error("encoding is not a valid group element")]
    NotInGroup,

    #[error("payload authentication failed")]
    Decryption,

    #[error("recombined shares have no discrete log in the tag range")]
    CorruptShare,

    #[error("index header mismatch: the peer was built with different parameters or keys")]
    HeaderMismatch,

    #[error("identifier {0} has no stored record")]
    UnknownIdentifier(u64),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
