use thiserror::Error;

/// Errors from the benchmark harness. [`BenchError::exit_code`] maps them to
/// the process exit status.
#[derive(Debug, Error)]
pub enum BenchError {
    /// Bad layer table, unknown network, bad flag value and the like.
    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Input { line: Option<usize>, message: String },

    /// A checked result exceeded its error tolerance.
    #[error("correctness violation: {0}")]
    Correctness(String),

    #[error(transparent)]
    Engine(#[from] winoconv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BenchError {
    pub fn input(message: impl Into<String>) -> Self {
        BenchError::Input {
            line: None,
            message: message.into(),
        }
    }

    pub fn input_at(line: usize, message: impl Into<String>) -> Self {
        BenchError::Input {
            line: Some(line),
            message: message.into(),
        }
    }

    /// 1 for correctness violations, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Correctness(_) => 1,
            _ => 2,
        }
    }
}
