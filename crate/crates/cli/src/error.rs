use std::fmt;
use std::process::ExitCode;

/// CLI failure with its documented exit status.
#[derive(Debug)]
pub enum CliError {
    Io(String),
    Parse(String),
    Config(String),
    EmptyDefects(String),
    Mismatch(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Io(_) | CliError::Internal(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Config(_) => 3,
            CliError::EmptyDefects(_) => 4,
            CliError::Mismatch(_) => 5,
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Parse(m) => write!(f, "parse error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::EmptyDefects(m) => write!(f, "no defective chips: {m}"),
            CliError::Mismatch(m) => write!(f, "coordinate mismatch: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<wafer_spr::filter::FilterError> for CliError {
    fn from(e: wafer_spr::filter::FilterError) -> Self {
        use wafer_spr::filter::FilterError as E;
        match e {
            E::InvalidConfig(_) | E::UnknownMethod(_) => CliError::Config(e.to_string()),
            E::EmptyWafer => CliError::EmptyDefects(e.to_string()),
            E::Wafer(_) => CliError::Parse(e.to_string()),
            E::Flow(_) | E::Internal(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<wafer_spr::iwmm::IwmmError> for CliError {
    fn from(e: wafer_spr::iwmm::IwmmError) -> Self {
        use wafer_spr::iwmm::IwmmError as E;
        match e {
            E::EmptyInput => CliError::EmptyDefects(e.to_string()),
            E::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<wafer_spr::pipeline::PipelineError> for CliError {
    fn from(e: wafer_spr::pipeline::PipelineError) -> Self {
        use wafer_spr::pipeline::PipelineError as E;
        match e {
            E::Filter(e) => e.into(),
            E::Iwmm(e) => e.into(),
            E::Wafer(e) => CliError::Parse(e.to_string()),
            E::TruthShape { .. } => CliError::Mismatch(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
