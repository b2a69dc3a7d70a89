use thiserror::Error;

/// Crate-wide error type. Variants distinguish caller mistakes (`Invalid`),
/// malformed external data (`Data`), and numerical breakdowns (`Numeric`) so
/// that front-ends can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its valid range or inputs are inconsistent.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A problem in external data, reported with a 1-based line number when
    /// it comes from a file.
    #[error("data error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Data { line: Option<usize>, msg: String },

    /// Numerical failure: factorization breakdown, non-finite intermediate
    /// values, and the like.
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("model file: {0}")]
    Model(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn data(line: impl Into<Option<usize>>, msg: impl Into<String>) -> Self {
        Error::Data { line: line.into(), msg: msg.into() }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_error_formats_line() {
        let e = Error::data(7, "bad cell");
        assert_eq!(e.to_string(), "data error at line 7: bad cell");
        let e = Error::data(None, "short file");
        assert_eq!(e.to_string(), "data error: short file");
    }
}
