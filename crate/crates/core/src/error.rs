use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("no stored features for sentence id {0}")]
    MissingSentence(u64),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("token mismatch at sentence {sentence}, token {token}: {detail}")]
    Alignment {
        sentence: u64,
        token: usize,
        detail: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),
}
