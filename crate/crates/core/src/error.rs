use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("task {task} needs a {expected:?} backend, got {got:?}")]
    RobotMismatch {
        task: String,
        expected: crate::variant::RobotKind,
        got: crate::variant::RobotKind,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("config file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UsageError {
    #[error("action has {got} entries, expected {expected}")]
    ActionLength { expected: usize, got: usize },
    #[error("action contains a non-finite value at index {0}")]
    NonFiniteAction(usize),
    #[error("step called before reset")]
    NotReset,
    #[error("step called after the episode ended; call reset")]
    EpisodeDone,
    #[error("control mode {0:?} is not configured on this backend")]
    Mode(crate::backend::ControlMode),
    #[error("command has {got} values, expected {expected}")]
    CommandLength { expected: usize, got: usize },
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error(transparent)]
    Usage(#[from] UsageError),
    #[error("transport error after {retries} retries: {message}")]
    Transport { message: String, retries: u32 },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Usage(#[from] UsageError),
    #[error(transparent)]
    Backend(BackendError),
}

impl From<BackendError> for EnvError {
    fn from(e: BackendError) -> Self {
        match e {
            BackendError::Usage(u) => EnvError::Usage(u),
            BackendError::Config(c) => EnvError::Config(c),
            other => EnvError::Backend(other),
        }
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("log line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("unsupported log schema version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SuccessError {
    #[error("episode log has no step records")]
    EmptyLog,
    #[error("log records lack the state needed by this task: {0}")]
    MissingState(&'static str),
}

#[derive(Debug, Error)]
pub enum CemError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Error)]
pub enum PolicyFileError {
    #[error("policy file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("policy file: {0}")]
    Format(String),
}
