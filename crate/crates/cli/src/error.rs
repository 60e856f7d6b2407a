use std::fmt;

/// Command failure with its exit-code class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CliError {
    Config(String),
    Io(String),
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Validation(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Validation(_) => "validation",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Validation(m) => m,
        }
    }
}

/// `error[kind]: message` on one line.
impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.kind(), self.message().replace('\n', " "))
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<ascnet::audio::AudioError> for CliError {
    fn from(e: ascnet::audio::AudioError) -> Self {
        use ascnet::audio::AudioError as E;
        match e {
            E::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ascnet::frontend::FrontendError> for CliError {
    fn from(e: ascnet::frontend::FrontendError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ascnet::frontend::CacheError> for CliError {
    fn from(e: ascnet::frontend::CacheError) -> Self {
        use ascnet::frontend::CacheError as E;
        match e {
            E::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ascnet::synth::SynthError> for CliError {
    fn from(e: ascnet::synth::SynthError) -> Self {
        use ascnet::synth::SynthError as E;
        match e {
            E::IoFailure(m) => CliError::Io(m),
            E::InvalidConfig(m) => CliError::Config(m),
        }
    }
}

impl From<ascnet::model::ModelError> for CliError {
    fn from(e: ascnet::model::ModelError) -> Self {
        use ascnet::model::ModelError as E;
        match e {
            E::ConfigMismatch(m) => CliError::Config(m),
            E::UnknownVariant(m) => CliError::Config(format!("unknown variant '{m}'")),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ascnet::train::TrainError> for CliError {
    fn from(e: ascnet::train::TrainError) -> Self {
        use ascnet::train::TrainError as E;
        match e {
            E::Io(e) => CliError::Io(e.to_string()),
            E::InvalidConfig(m) => CliError::Config(m),
            E::Model(m) => m.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ascnet::fusion::FusionError> for CliError {
    fn from(e: ascnet::fusion::FusionError) -> Self {
        use ascnet::fusion::FusionError as E;
        match e {
            E::Io(e) => CliError::Io(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}
