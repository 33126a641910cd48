use std::fmt;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    /// Threshold not met (`validate`).
    pub const THRESHOLD: u8 = 1;
    /// Unreadable or malformed configuration, missing section.
    pub const SCHEMA: u8 = 2;
    /// Configuration violates a model invariant.
    pub const INVARIANT: u8 = 3;
    /// A computation or output step failed.
    pub const MODULE: u8 = 4;

    pub fn schema(message: impl Into<String>) -> Self {
        Self { code: Self::SCHEMA, message: message.into() }
    }

    pub fn invariant(message: impl Into<String>) -> Self {
        Self { code: Self::INVARIANT, message: message.into() }
    }

    pub fn module(message: impl Into<String>) -> Self {
        Self { code: Self::MODULE, message: message.into() }
    }

    pub fn threshold(message: impl Into<String>) -> Self {
        Self { code: Self::THRESHOLD, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<agestruct::Error> for Failure {
    fn from(e: agestruct::Error) -> Self {
        Self::module(e.to_string())
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::module(format!("{e:#}"))
    }
}
