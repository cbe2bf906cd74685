//! Command-line front end for the `chiral` crate.

pub mod commands;
pub mod config;
pub mod output;

use output::JsonObject;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    /// number of failed checks
    CheckFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::CheckFailed(_) => 1,
            Self::Numeric(_) => 2,
            Self::Config(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::CheckFailed(_) => "check",
            Self::Numeric(_) => "numeric",
            Self::Config(_) => "config",
        }
    }

    pub fn message(&self) -> String {
        match self {
            Self::Config(m) | Self::Numeric(m) => m.clone(),
            Self::CheckFailed(n) => format!("{n} check(s) failed"),
        }
    }

    pub fn to_json(&self) -> String {
        JsonObject::new().str("error", self.kind()).int("exit_code", self.exit_code() as i64).str("message", &self.message()).render()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl From<chiral::Error> for CliError {
    fn from(e: chiral::Error) -> Self {
        use chiral::Error as E;
        match e {
            E::Parse { .. } | E::FrequencyClass(_) | E::Resource { .. } | E::BasisMismatch(_) => Self::Config(e.to_string()),
            _ => Self::Numeric(e.to_string()),
        }
    }
}
