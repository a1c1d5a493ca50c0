//! Error taxonomy shared by the library and the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GglabError {
    /// Malformed user input (bad symbol, bad file syntax, colliding reps, ...).
    #[error("input error: {0}")]
    Input(String),

    /// A presentation or run configuration that cannot be used.
    #[error("configuration error: {0}")]
    Config(String),

    /// A hard budget was exceeded; the message names the budget.
    #[error("resource error: {0}")]
    Resource(String),

    /// Mathematically invalid query (disconnected inputs, empty target set, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Operation not available for this presentation strategy.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GglabError>;
