use lacn_twin::TwinError;

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_COMPUTE: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Twin(#[from] TwinError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Twin(e) if e.is_input_error() => EXIT_INPUT,
            CliError::Twin(_) => EXIT_COMPUTE,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
