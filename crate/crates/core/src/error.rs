use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("value {value} at bin {bin}, link {link} exceeds v_max {v_max}")]
    ValueOutOfRange {
        bin: usize,
        link: usize,
        value: u32,
        v_max: u32,
    },

    #[error("decode error: {0}")]
    Decode(String),

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("{0}")]
    Unreachable(String),

    #[error("external tool: {0}")]
    Tool(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable short identifier for machine-readable error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidArgument(_) => "invalid_argument",
            Self::Topology(_) => "topology",
            Self::Dataset(_) => "dataset",
            Self::Parse { .. } => "parse",
            Self::UndefinedCorrelation(_) => "undefined_correlation",
            Self::ValueOutOfRange { .. } => "value_out_of_range",
            Self::Decode(_) => "decode",
            Self::ModelMismatch(_) => "model_mismatch",
            Self::Corrupt(_) => "corrupt",
            Self::Unreachable(_) => "unreachable",
            Self::Tool(_) => "tool",
            Self::Io(_) => "io",
        }
    }
}
