//! MapReduce engine: splits, partitioned map spills, shuffle merge, reduce,
//! locality-aware scheduling and attempt retry.

mod engine;
mod master;
mod registry;
mod runner;
mod schedule;
mod split;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::blockstore::DfsError;

pub use engine::{
    decode_spill, encode_spill, fnv1a64, merge_spills, partition_of, run_map, run_reduce, Emitter, KvPair,
    MapOutput, SpillError,
};
pub use master::{handle_task_failure, Job, JobMaster, JobState, JobStatus, TaskState};
pub use registry::{FunctionRegistry, MapFn, ReduceFn};
pub use runner::{spill_path, ExecContext, LaunchSpec, MapOutputRef, TaskOutcome, TaskReport, TaskRunner};
pub use schedule::{schedule, PendingTask};
pub use split::{compute_splits, split_records, InputSplit};

pub const SUCCESS_MARKER: &str = "_SUCCESS";
pub const TEMP_DIR: &str = "_temporary";

pub fn part_name(reduce: u32) -> String {
    format!("part-r-{reduce:05}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobSpec {
    pub job_id: String,
    pub map_fn: String,
    pub reduce_fn: String,
    pub input_paths: Vec<String>,
    pub output_path: String,
    pub num_reduces: u32,
    pub max_attempts: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    Map,
    Reduce,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId {
    pub job: String,
    pub kind: TaskKind,
    pub index: u32,
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            TaskKind::Map => 'm',
            TaskKind::Reduce => 'r',
        };
        write!(f, "{}_{k}_{:05}", self.job, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttemptState {
    Pending,
    Running,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskAttempt {
    pub task: TaskId,
    /// 1-based.
    pub attempt: u32,
    pub node: Option<crate::fabric::NodeId>,
    pub state: AttemptState,
}

impl fmt::Display for TaskAttempt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_a{}", self.task, self.attempt)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum JobError {
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("{0}: output path already exists")]
    OutputExists(String),
    #[error("unknown job {0}")]
    UnknownJob(String),
    #[error("invalid job: {0}")]
    Invalid(String),
    #[error("job {job} failed: {reason}")]
    Failed { job: String, reason: String },
    #[error(transparent)]
    Dfs(#[from] DfsError),
}
