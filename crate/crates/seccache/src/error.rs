use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid cache placement: {0}")]
    Placement(String),
    #[error("invalid uncertainty level {0} (must lie in [0, 1))")]
    Uncertainty(f64),
    #[error("subproblem has no {0} duals in eliminated mode")]
    NoDuals(&'static str),
    #[error("negative dual {value:e} on {tag}")]
    NegativeDual { tag: String, value: f64 },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("{failures} of {attempts} solves failed, above the budget {budget}")]
    FailureBudget { failures: usize, attempts: usize, budget: f64 },
    #[error("conic model error: {0}")]
    Conic(#[from] conic::ConicError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
