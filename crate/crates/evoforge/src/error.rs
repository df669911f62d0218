//! Crate-wide error types.

use thiserror::Error;

/// Top-level error for optimizer runs and CLI commands.
#[derive(Debug, Error)]
pub enum EvoError {
    /// Invalid configuration. Reported with a field path before any work starts.
    #[error("config: {0}")]
    Config(String),

    #[error("provider: {0}")]
    Provider(#[from] ProviderError),

    #[error("operator: {0}")]
    Operator(#[from] OperatorError),

    #[error("task: {0}")]
    Task(#[from] TaskError),

    /// Engine step failure, tagged with the iteration it happened in.
    #[error("iteration {iteration}: {source}")]
    Step {
        iteration: usize,
        #[source]
        source: Box<EvoError>,
    },

    /// I/O failure with the offending path folded into the message.
    #[error("io: {0}")]
    Io(String),

    #[error("{0}")]
    Other(String),
}

impl EvoError {
    pub fn config(msg: impl Into<String>) -> Self {
        EvoError::Config(msg.into())
    }

    pub fn at_iteration(self, iteration: usize) -> Self {
        EvoError::Step {
            iteration,
            source: Box::new(self),
        }
    }

    /// Process exit code for the CLI: 2 config, 3 provider, 4 I/O, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            EvoError::Config(_) => 2,
            EvoError::Provider(_) => 3,
            EvoError::Io(_) => 4,
            EvoError::Step { source, .. } => source.exit_code(),
            EvoError::Operator(OperatorError::Provider(_)) => 3,
            EvoError::Task(TaskError::Provider(_)) => 3,
            EvoError::Task(TaskError::Io(_)) => 4,
            _ => 1,
        }
    }
}

/// Chat-completion transport and policy failures.
#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("missing API key: set {0}")]
    MissingCredential(String),

    #[error("transport: {0}")]
    Transport(String),

    /// Non-2xx after retries are exhausted.
    #[error("http {status} after {attempts} attempts (request id {request_id})")]
    Http {
        status: u16,
        attempts: u32,
        request_id: String,
    },

    #[error("malformed completion response: {0}")]
    BadResponse(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Template rendering and response parsing failures.
#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("template: {0}")]
    Template(String),

    #[error("empty prompt passed to operator")]
    EmptyInput,

    #[error("no prompt could be extracted from the completion")]
    EmptyExtraction,

    #[error("extracted prompt exceeds {limit} characters")]
    TooLong { limit: usize },

    #[error("operator gave no usable child after {attempts} attempts")]
    RetriesExhausted { attempts: u32 },

    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Dataset and evaluation-harness failures.
#[derive(Debug, Error)]
pub enum TaskError {
    #[error("dataset: {0}")]
    Dataset(String),

    #[error("template: {0}")]
    Template(String),

    #[error("demo pool is missing an example for label {0:?}")]
    MissingDemoLabel(String),

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
