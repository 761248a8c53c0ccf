//! Error taxonomy shared by every module; the CLI maps variants to exit codes.

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed inputs: bad shapes, out-of-range parameters, unknown config keys.
    #[error("configuration error: {0}")]
    Config(String),
    /// A numeric routine failed to converge or produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// An episode budget guard tripped (never silently truncated).
    #[error("budget error: {0}")]
    Budget(String),
    /// Random instance generation exhausted its retry limit.
    #[error("generation error: {0}")]
    Generation(String),
    #[error("check failure: {0}")]
    Check(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 check failure, 4 budget, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Check(_) => 3,
            Error::Budget(_) => 4,
            _ => 1,
        }
    }
}
