use std::fmt;

use entclust::corpus::CorpusError;
use entclust::features::FeatureError;
use entclust::gcc::GccError;
use entclust::graph::GraphError;
use entclust::metrics::MetricsError;
use entclust::propagation::PropagationError;
use entclust::selection::SelectionError;
use entclust::synth::SynthError;
use entclust::w2v::W2vError;

/// Failure class, which determines the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numerical => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub stage: Option<String>,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            stage: None,
            message: msg.into(),
        }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Data,
            stage: None,
            message: msg.into(),
        }
    }

    pub fn in_stage(mut self, stage: &str) -> Self {
        self.stage.get_or_insert_with(|| stage.to_owned());
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.stage {
            Some(s) => write!(f, "stage {s} failed: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

fn classify(kind: ErrorKind, e: impl fmt::Display) -> CliError {
    CliError {
        kind,
        stage: None,
        message: e.to_string(),
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        classify(ErrorKind::Data, e)
    }
}

impl From<W2vError> for CliError {
    fn from(e: W2vError) -> Self {
        let kind = match e {
            W2vError::Config(_) => ErrorKind::Config,
            W2vError::Diverged => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        };
        classify(kind, e)
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        let kind = match e {
            GraphError::Config(_) | GraphError::KnnRange { .. } => ErrorKind::Config,
            _ => ErrorKind::Data,
        };
        classify(kind, e)
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        let kind = match e {
            FeatureError::Config(_) | FeatureError::ApiKeyMissing(_) => ErrorKind::Config,
            FeatureError::NonFinite { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        };
        classify(kind, e)
    }
}

impl From<GccError> for CliError {
    fn from(e: GccError) -> Self {
        let kind = match e {
            GccError::Config(_) | GccError::ClusterCount { .. } => ErrorKind::Config,
            GccError::NonFinite | GccError::Diverged(_) => ErrorKind::Numerical,
        };
        classify(kind, e)
    }
}

impl From<SelectionError> for CliError {
    fn from(e: SelectionError) -> Self {
        match e {
            SelectionError::Gcc(g) => g.into(),
            SelectionError::Propagation(p) => p.into(),
            SelectionError::Config(m) => CliError::config(m),
        }
    }
}

impl From<PropagationError> for CliError {
    fn from(e: PropagationError) -> Self {
        classify(ErrorKind::Data, e)
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        classify(ErrorKind::Data, e)
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        let kind = match e {
            SynthError::Config(_) => ErrorKind::Config,
            SynthError::Write { .. } => ErrorKind::Data,
        };
        classify(kind, e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        classify(ErrorKind::Data, e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        classify(ErrorKind::Data, e)
    }
}
