use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: &'static str },
    #[error("`{name}` = {value} is outside its domain ({domain})")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("spectrum is not strictly ordered at index {index}")]
    NotStrictlyOrdered { index: usize },
    #[error("shape mismatch for `{name}`: expected {expected}, found {found}")]
    Shape {
        name: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("modulation entry ({row}, {col}) = {value} must be positive")]
    InvalidModulation { row: usize, col: usize, value: f64 },
    #[error("nodes {first} and {second} are nearly coincident; least-squares system is ill-conditioned")]
    IllConditioned { first: usize, second: usize },
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, domain: &'static str) -> Self {
        Error::Domain { name, value, domain }
    }

    pub(crate) fn invalid(name: &'static str, reason: &'static str) -> Self {
        Error::InvalidParameter { name, reason }
    }
}
