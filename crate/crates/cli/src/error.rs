use std::fmt;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_VIOLATION: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }

    /// Core errors raised while checking a config before any work starts.
    pub fn invalid(e: hssd::Error) -> Self {
        Self::validation(e.to_string())
    }

    /// Core errors raised while a command is running.
    pub fn failed(e: hssd::Error) -> Self {
        Self::runtime(e.to_string())
    }

    pub fn io(what: &str, e: std::io::Error) -> Self {
        Self::runtime(format!("{what}: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
