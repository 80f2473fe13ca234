//! Top-level error and the operator exit-code table.

use std::path::PathBuf;

use crate::blockstore::DfsError;
use crate::config::ConfigError;
use crate::fabric::FabricError;
use crate::ingestion::PlantError;
use crate::mapreduce::JobError;

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const LIFECYCLE: i32 = 2;
    pub const IO: i32 = 3;
    pub const PERMISSION: i32 = 4;
    pub const NOT_FOUND: i32 = 5;
    pub const JOB_FAILED: i32 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("plant spec {0}")]
    Plant(#[from] PlantError),
    #[error("{path}: line {line}: malformed record: {msg}")]
    MalformedRecord { path: String, line: usize, msg: String },
    #[error("a cluster is running against this storage root")]
    Busy,
    #[error("namespace not formatted; run format first")]
    NotFormatted,
    #[error("cluster already running")]
    AlreadyRunning,
    #[error("no cluster running; run start first")]
    NotRunning,
    #[error("cannot start cluster: {0}")]
    Startup(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Dfs(#[from] DfsError),
    #[error(transparent)]
    Job(#[from] JobError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use exit::*;
        match self {
            Error::Usage(_) | Error::Config(_) | Error::Plant(_) | Error::MalformedRecord { .. } => USAGE,
            Error::Busy | Error::NotFormatted | Error::AlreadyRunning | Error::NotRunning | Error::Startup(_) => {
                LIFECYCLE
            }
            Error::Io { .. } => IO,
            Error::Dfs(e) => dfs_code(e),
            Error::Job(e) => match e {
                JobError::UnknownFunction(_) | JobError::OutputExists(_) | JobError::Invalid(_) => USAGE,
                JobError::UnknownJob(_) => NOT_FOUND,
                JobError::Failed { .. } => JOB_FAILED,
                JobError::Dfs(d) => dfs_code(d),
            },
            Error::Fabric(e) => match e {
                FabricError::UnknownNode(_) | FabricError::InvalidScript(_) | FabricError::BadFrame(_) => USAGE,
                FabricError::SourceDown(_) | FabricError::FrameTooLarge { .. } => IO,
            },
        }
    }
}

fn dfs_code(e: &DfsError) -> i32 {
    use exit::*;
    match e {
        DfsError::PermissionDenied { .. } => PERMISSION,
        DfsError::NotFound(_) => NOT_FOUND,
        DfsError::AlreadyExists(_)
        | DfsError::NotADirectory(_)
        | DfsError::IsADirectory(_)
        | DfsError::InvalidPath(_)
        | DfsError::InvalidName(_)
        | DfsError::InvalidReplication
        | DfsError::AlreadyWritten(_) => USAGE,
        DfsError::NoLiveNodes
        | DfsError::AllReplicasCorrupt(_)
        | DfsError::BlockUnavailable(_)
        | DfsError::MasterUnreachable
        | DfsError::CorruptImage(_)
        | DfsError::Io(_) => IO,
        DfsError::Fabric(f) => match f {
            FabricError::UnknownNode(_) | FabricError::InvalidScript(_) | FabricError::BadFrame(_) => USAGE,
            _ => IO,
        },
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
