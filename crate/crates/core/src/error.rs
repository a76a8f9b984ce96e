use thiserror::Error;

/// Errors produced by estimation, I/O and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// IRLS ran out of iterations. `last_iterate` holds the final coefficients
    /// (intercept first).
    #[error(
        "logistic IRLS did not converge within {iterations} iterations \
         (gradient sup-norm {gradient_norm:.3e})"
    )]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code used by the CLI: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Schema(_)
            | Error::Argument(_)
            | Error::Protocol(_)
            | Error::Unsupported(_) => 2,
            Error::Data(_) | Error::Io(_) | Error::Csv(_) => 3,
            Error::Numerical(_) | Error::Convergence { .. } => 4,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Schema(_) => "schema",
            Error::Data(_) => "data",
            Error::Argument(_) => "argument",
            Error::Numerical(_) => "numerical",
            Error::Convergence { .. } => "convergence",
            Error::Protocol(_) => "protocol",
            Error::Unsupported(_) => "unsupported",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_category() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::Schema("x".into()).exit_code(), 2);
        assert_eq!(Error::Data("x".into()).exit_code(), 3);
        assert_eq!(Error::Numerical("x".into()).exit_code(), 4);
        let conv = Error::Convergence {
            iterations: 3,
            gradient_norm: 1.0,
            last_iterate: vec![0.0],
        };
        assert_eq!(conv.exit_code(), 4);
        assert_eq!(conv.kind(), "convergence");
    }
}
