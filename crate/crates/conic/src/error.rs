use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("constraint `{tag}` references unknown variable {index}")]
    UnknownVariable { tag: String, index: usize },
    #[error("`{0}`: scalar/matrix variable used in the wrong kind of term")]
    KindMismatch(String),
    #[error("`{tag}`: expected {expected:?}, found {found:?}")]
    Dimension { tag: String, expected: (usize, usize), found: (usize, usize) },
    #[error("`{0}`: coefficient matrix is not Hermitian")]
    NotHermitian(String),
    #[error("`{0}`: non-finite data")]
    NonFinite(String),
    #[error("tolerance {0} outside (1e-12, 1e-2)")]
    Tolerance(f64),
}
