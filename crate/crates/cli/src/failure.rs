//! Failure classes and their exit statuses.

use std::fmt;

use finsec::Error;

#[derive(Debug)]
pub enum Failure {
    /// Malformed config or literal: status 2.
    Parse(String),
    /// Unresolved names, bad parameters, unwritable output: status 3.
    Validation(String),
    /// Non-finite values or quadrature breakdown: status 4.
    Numerical(String),
    /// An identity check failed: status 1.
    Identity(String),
}

impl Failure {
    pub fn status(&self) -> u8 {
        match self {
            Failure::Identity(_) => 1,
            Failure::Parse(_) => 2,
            Failure::Validation(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    pub fn from_core(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Parse(_) => Failure::Parse(msg),
            Error::NonFinite(_) | Error::Quadrature(_) | Error::AmbiguousPoint { .. } => {
                Failure::Numerical(msg)
            }
            Error::DimensionMismatch { .. }
            | Error::InvalidPartition(_)
            | Error::UnknownOperator(_)
            | Error::InvalidArgument(_)
            | Error::ProbeSupport { .. }
            | Error::Domain(_) => Failure::Validation(msg),
        }
    }

    pub fn context(self, what: &str) -> Self {
        let add = |m: String| format!("{what}: {m}");
        match self {
            Failure::Parse(m) => Failure::Parse(add(m)),
            Failure::Validation(m) => Failure::Validation(add(m)),
            Failure::Numerical(m) => Failure::Numerical(add(m)),
            Failure::Identity(m) => Failure::Identity(add(m)),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::from_core(e)
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (kind, m) = match self {
            Failure::Parse(m) => ("parse error", m),
            Failure::Validation(m) => ("validation error", m),
            Failure::Numerical(m) => ("numerical failure", m),
            Failure::Identity(m) => ("identity failed", m),
        };
        write!(f, "{kind}: {m}")
    }
}
