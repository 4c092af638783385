use std::fmt;

/// Exit status categories of the command-line tool.
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Lib(modl::Error),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Lib(modl::Error::Numeric(_)) => EXIT_NUMERIC,
            CliError::Lib(_) => EXIT_DATA,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<modl::Error> for CliError {
    fn from(e: modl::Error) -> Self {
        CliError::Lib(e)
    }
}

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn data(msg: impl Into<String>) -> CliError {
    CliError::Lib(modl::Error::Compatibility(msg.into()))
}

pub fn io(path: &std::path::Path, e: std::io::Error) -> CliError {
    data(format!("{}: {e}", path.display()))
}
