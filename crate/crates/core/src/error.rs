use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value out of range: {0}")]
    Domain(String),
    #[error("plaintext 0 has no multiplicative encryption; use a pair encoding")]
    ZeroPlaintext,
    #[error("degenerate ciphertext: {0}")]
    DegenerateCiphertext(&'static str),
    #[error("key integrity check failed: {0}")]
    KeyIntegrity(&'static str),
    #[error("prime generation gave up after {0} candidates")]
    Generation(usize),
    #[error("operands were produced under different moduli")]
    ModulusMismatch,
    #[error("non-invertible residue during switch; retry with fresh randomness")]
    Retry,
    #[error("switch failed after {0} retries")]
    RetryExhausted(usize),
    #[error("protocol order violation: {0}")]
    ProtocolOrder(String),
    #[error("stage {stage}: {reason}")]
    Stage { stage: String, reason: String },
    #[error("session aborted in stage {stage}: {reason}")]
    Aborted { stage: String, reason: String },
    #[error("malformed message: {0}")]
    Wire(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Wire(e.to_string())
    }
}
