use std::fmt;

/// Failure of a command, split the way exit codes are.
#[derive(Debug)]
pub enum CliError {
    /// Bad config, bad overrides, unreadable inputs. Exit 1.
    Validation(String),
    /// Divergence, non-summable kernels and other numerical failures. Exit 2.
    Numerical(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        CliError::Validation(format!("config: {msg}"))
    }

    pub fn io(msg: impl fmt::Display) -> Self {
        CliError::Validation(format!("io: {msg}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<nlperim_core::Error> for CliError {
    fn from(e: nlperim_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::io(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_kind() {
        let numerical = nlperim_core::Error::Diverged {
            stage: 0,
            iteration: 3,
            consecutive: 10,
        };
        assert_eq!(CliError::from(numerical).exit_code(), 2);
        assert_eq!(CliError::from(nlperim_core::Error::FractionalOrder(1.5)).exit_code(), 1);
        assert_eq!(CliError::from(nlperim_core::Error::NotSummable { lower_bound: 1.0 }).exit_code(), 2);
    }
}
