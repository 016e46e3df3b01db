use std::fmt;

use thiserror::Error;

use crate::expr::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("coordinate map has a singular Jacobian at {point:?}")]
    SingularJacobian { point: Vec<f64> },
    #[error("symmetric eigen decomposition produced non-finite values")]
    Eigen,
    #[error("invalid input signal: {0}")]
    Signal(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("trajectory escaped at t = {time}: {reason}")]
    Escape { time: f64, reason: String },
}

/// A function evaluated outside its domain, with the variable values that led there.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainError {
    pub message: String,
    pub context: Vec<(String, f64)>,
}

impl DomainError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { message: message.into(), context: Vec::new() }
    }

    pub fn with_context(mut self, context: Vec<(String, f64)>) -> Self {
        if self.context.is_empty() {
            self.context = context;
        }
        self
    }
}

impl fmt::Display for DomainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "domain error: {}", self.message)?;
        if !self.context.is_empty() {
            let vars: Vec<String> = self.context.iter().map(|(k, v)| format!("{k} = {v}")).collect();
            write!(f, " at [{}]", vars.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for DomainError {}
