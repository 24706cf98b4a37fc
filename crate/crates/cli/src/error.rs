use std::fmt;

use ovsens::{Error, ErrorKind};

/// A library error tagged with where in the pipeline it happened.
#[derive(Debug)]
pub struct PipelineError {
    pub module: &'static str,
    pub operation: &'static str,
    pub source: Error,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} / {}: {}", self.module, self.operation, self.source)
    }
}

impl std::error::Error for PipelineError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl PipelineError {
    pub fn kind(&self) -> ErrorKind {
        self.source.kind()
    }

    /// Process exit code: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Numerical => 3,
        }
    }
}

pub type PResult<T> = std::result::Result<T, PipelineError>;

pub trait Context<T> {
    fn ctx(self, module: &'static str, operation: &'static str) -> PResult<T>;
}

impl<T> Context<T> for ovsens::Result<T> {
    fn ctx(self, module: &'static str, operation: &'static str) -> PResult<T> {
        self.map_err(|source| PipelineError {
            module,
            operation,
            source,
        })
    }
}
