use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] recloop_core::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("arm {arm}, replication {replication}, step {step}: {source}")]
    Arm {
        arm: String,
        replication: usize,
        step: usize,
        source: recloop_core::Error,
    },
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;
