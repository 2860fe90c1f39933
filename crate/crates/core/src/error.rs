use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("empty range: {0}")]
    EmptyRange(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate series for agent {agent}: zero variance, correlation undefined")]
    DegenerateSeries { agent: String },

    #[error(
        "no threshold yields {n_coal} disjoint cliques of size {k} among {n_agents} agents; \
         lower k or the number of coalitions"
    )]
    Infeasible { k: usize, n_coal: usize, n_agents: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("agent {0} is already a member of the coalition")]
    Membership(String),

    #[error("degenerate parameters: {0}")]
    DegenerateParameters(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
