use std::path::PathBuf;

use ggcnn_core::access::AccessError;
use ggcnn_core::container::ContainerError;
use ggcnn_core::evalbench::EvalError;
use ggcnn_core::graph::GraphError;
use ggcnn_core::ingest::IngestError;
use ggcnn_core::neuro::NeuroError;
use ggcnn_core::train::TrainError;
use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {message}", path.display())]
    Input { path: PathBuf, message: String },
    #[error("missing upstream artifact {} (run the `{stage}` stage first)", path.display())]
    MissingUpstreamArtifact { stage: &'static str, path: PathBuf },
    #[error("workdir {} is locked by another run ({})", path.display(), holder)]
    Locked { path: PathBuf, holder: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Container {
        path: PathBuf,
        #[source]
        source: ContainerError,
    },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Access(#[from] AccessError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Neuro(#[from] NeuroError),
    #[error("{0}")]
    Runtime(String),
}

fn graph_code(e: &GraphError) -> i32 {
    match e {
        GraphError::WindowTooLarge { .. } | GraphError::WindowTooSmall(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn neuro_code(e: &NeuroError) -> i32 {
    match e {
        NeuroError::HiddenTooSmall { .. } | NeuroError::InvalidSteps | NeuroError::InvalidSpec(_) | NeuroError::Checkpoint(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn train_code(e: &TrainError) -> i32 {
    match e {
        TrainError::InvalidConfig(_) | TrainError::Ingest(_) | TrainError::Dataset(_) => EXIT_USAGE,
        TrainError::Neuro(n) => neuro_code(n),
        TrainError::Graph(g) => graph_code(g),
        TrainError::DivergedLoss { .. } => EXIT_RUNTIME,
    }
}

impl CliError {
    /// 2 for usage and input problems, 3 for failures while computing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_)
            | CliError::Input { .. }
            | CliError::MissingUpstreamArtifact { .. }
            | CliError::Locked { .. }
            | CliError::Io { .. }
            | CliError::Container { .. }
            | CliError::Ingest(_)
            | CliError::Access(_) => EXIT_USAGE,
            CliError::Graph(e) => graph_code(e),
            CliError::Neuro(e) => neuro_code(e),
            CliError::Train(e) => train_code(e),
            CliError::Eval(e) => match e {
                EvalError::InvalidSpec(_) | EvalError::Ingest(_) => EXIT_USAGE,
                EvalError::Train(t) => train_code(t),
                EvalError::Graph(g) => graph_code(g),
                _ => EXIT_RUNTIME,
            },
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    pub fn container(path: impl Into<PathBuf>) -> impl FnOnce(ContainerError) -> Self {
        let path = path.into();
        move |source| CliError::Container { path, source }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
