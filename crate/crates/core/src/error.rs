use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in `{field}`: expected {expected_rows}x{expected_cols}, found {rows}x{cols}")]
    Dimension { field: &'static str, expected_rows: usize, expected_cols: usize, rows: usize, cols: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("{context}: blow-up at t = {time}")]
    BlowUp { context: String, time: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite state at node {node} for agent {agent}")]
    NonFiniteState { node: usize, agent: usize },
}

impl Error {
    /// Replaces the context of a blow-up error, leaving other variants alone.
    pub fn with_context(self, context: &str) -> Self {
        match self {
            Error::BlowUp { time, .. } => Error::BlowUp { context: context.into(), time },
            other => other,
        }
    }
}
