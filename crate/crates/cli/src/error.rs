use std::fmt;

/// Process exit codes.
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<mcl_core::Error> for CliError {
    fn from(e: mcl_core::Error) -> Self {
        use mcl_core::Error as E;
        let code = match &e {
            E::Numeric(_) | E::DegenerateEmbedding(_) => EXIT_NUMERIC,
            E::InvalidConfig(_)
            | E::InvalidSpec(_)
            | E::InvalidParameter(_)
            | E::InvalidTemperature(_)
            | E::NegativeEps(_)
            | E::KTooLarge { .. }
            | E::SplitTooLarge { .. }
            | E::TooFewLabels { .. } => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::data(format!("json: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::data(format!("csv: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
