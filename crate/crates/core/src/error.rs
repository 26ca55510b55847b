use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad classes of failure, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Rules,
    Io,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Validation => 2,
            ErrorClass::Rules => 3,
            ErrorClass::Io => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid room: {0}")]
    InvalidRoom(String),
    #[error("room cannot reach RT60 {rt60} s: Sabine absorption {alpha:.3} exceeds 1")]
    InfeasibleReverberation { rt60: f64, alpha: f64 },
    #[error("no feasible receiver region: {0}")]
    InfeasibleGeometry(String),
    #[error("geometry sampling gave up after {0} draws")]
    SamplingFailure(usize),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{kind} not found: {id}")]
    NotFound { kind: &'static str, id: String },
    #[error("render overflow in scene {0}: non-finite samples after headroom normalisation")]
    RenderOverflow(String),
    #[error("target has no active frames")]
    SilentTarget,
    #[error("reference signal is silent")]
    SilentReference,
    #[error("corpus holds {available} utterances but {requested} scenes were requested")]
    InsufficientCorpus { available: usize, requested: usize },
    #[error("alignment failed: {0}")]
    AlignmentFailure(String),
    #[error("logistic fit failed: {0}")]
    FitFailure(String),
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("processor is not deterministic; cannot verify causality")]
    CannotVerify,
    #[error("processor failed: {0}")]
    ProcessorFailed(String),
    #[error("entry {entry_id} disqualified: lookahead {lookahead_ms:.3} ms exceeds {limit_ms} ms")]
    Disqualified {
        entry_id: String,
        lookahead_ms: f64,
        limit_ms: f64,
    },
    #[error("incomplete entry, missing: {}", .0.join(", "))]
    IncompleteEntry(Vec<String>),
    #[error("incomplete panel, missing: {}", .0.join(", "))]
    IncompletePanel(Vec<String>),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("{key} = {value} outside [{min}, {max}]")]
    Range {
        key: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid transcript: {0}")]
    InvalidTranscript(String),
    #[error("config: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Disqualified { .. } => ErrorClass::Rules,
            Error::Io { .. } | Error::Format { .. } => ErrorClass::Io,
            Error::Stage { source, .. } => source.class(),
            _ => ErrorClass::Validation,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
