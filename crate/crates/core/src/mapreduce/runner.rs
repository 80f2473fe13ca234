use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::engine::{decode_spill, encode_spill, merge_spills, run_map, run_reduce};
use super::registry::FunctionRegistry;
use super::split::{split_records, InputSplit};
use super::{part_name, TaskId, TaskKind, TEMP_DIR};
use crate::blockstore::{BlockNode, DfsClient, Mode, NamespaceMaster, Principal, DEFAULT_DIR_MODE};
use crate::fabric::{Fabric, Message, MessageKind, NodeId};

/// Where a finished map attempt left its spills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapOutputRef {
    pub map: u32,
    pub attempt: u32,
    pub node: NodeId,
}

/// Everything a runner needs to execute one attempt. Sent in a LaunchTask
/// message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaunchSpec {
    pub task: TaskId,
    pub attempt: u32,
    pub principal: Principal,
    pub map_fn: String,
    pub reduce_fn: String,
    pub num_reduces: u32,
    pub replication: u16,
    pub output_path: String,
    pub split: Option<InputSplit>,
    /// For reduces: one entry per map, in map order.
    pub map_outputs: Vec<MapOutputRef>,
}

impl LaunchSpec {
    pub fn attempt_name(&self) -> String {
        format!("{}_a{}", self.task, self.attempt)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskOutcome {
    Succeeded {
        counters: BTreeMap<String, u64>,
        /// Reduce output awaiting commit.
        output: Option<String>,
    },
    Failed(String),
    FetchFailed {
        map: u32,
        node: NodeId,
    },
}

/// Sent in a TaskStatus message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: TaskId,
    pub attempt: u32,
    pub node: NodeId,
    pub outcome: TaskOutcome,
}

/// Shared handles a task needs while it runs.
pub struct ExecContext<'a> {
    pub fabric: &'a mut Fabric,
    pub master: &'a mut NamespaceMaster,
    pub block_nodes: &'a BTreeMap<NodeId, BlockNode>,
    pub runner_dirs: &'a BTreeMap<NodeId, PathBuf>,
    pub registry: &'a FunctionRegistry,
}

impl ExecContext<'_> {
    pub fn client(&mut self, local: NodeId, principal: Principal) -> DfsClient<'_> {
        DfsClient::new(self.fabric, self.master, self.block_nodes, local, principal)
    }
}

pub fn spill_path(runner_dir: &Path, task: &TaskId, attempt: u32, partition: u32) -> PathBuf {
    runner_dir
        .join(&task.job)
        .join(format!("m{:05}-a{attempt}", task.index))
        .join(format!("part-{partition:05}.spill"))
}

/// A task runner daemon: a fixed number of slots and the attempts occupying
/// them.
#[derive(Debug, Clone)]
pub struct TaskRunner {
    pub node: NodeId,
    pub dir: PathBuf,
    running: Vec<(u64, LaunchSpec)>,
}

impl TaskRunner {
    pub fn new(node: NodeId, dir: PathBuf) -> Self {
        TaskRunner {
            node,
            dir,
            running: Vec::new(),
        }
    }

    pub fn launch(&mut self, spec: LaunchSpec, finish_at: u64) {
        self.running.push((finish_at, spec));
    }

    pub fn running(&self) -> usize {
        self.running.len()
    }

    /// Attempts whose work is done by `now`, earliest first.
    pub fn take_due(&mut self, now: u64) -> Vec<LaunchSpec> {
        let (mut due, rest): (Vec<_>, Vec<_>) = self.running.drain(..).partition(|(at, _)| *at <= now);
        self.running = rest;
        due.sort_by(|a, b| (a.0, &a.1.task, a.1.attempt).cmp(&(b.0, &b.1.task, b.1.attempt)));
        due.into_iter().map(|(_, s)| s).collect()
    }

    pub fn execute(&self, spec: &LaunchSpec, ctx: &mut ExecContext<'_>) -> TaskOutcome {
        let res = match spec.task.kind {
            TaskKind::Map => self.execute_map(spec, ctx),
            TaskKind::Reduce => self.execute_reduce(spec, ctx),
        };
        res.unwrap_or_else(TaskOutcome::Failed)
    }

    fn execute_map(&self, spec: &LaunchSpec, ctx: &mut ExecContext<'_>) -> Result<TaskOutcome, String> {
        let map_fn = ctx
            .registry
            .map(&spec.map_fn)
            .ok_or_else(|| format!("unknown map function {}", spec.map_fn))?;
        let split = spec.split.as_ref().ok_or("map task without a split")?;
        let records = {
            let mut client = ctx.client(self.node, spec.principal.clone());
            split_records(split, |i| client.read_block(&split.path, i)).map_err(|e| e.to_string())?
        };
        let out = run_map(records.iter().map(Vec::as_slice), map_fn, spec.num_reduces)?;
        for (p, part) in out.partitions.iter().enumerate() {
            let path = spill_path(&self.dir, &spec.task, spec.attempt, p as u32);
            let write = || -> std::io::Result<()> {
                fs::create_dir_all(path.parent().expect("has parent"))?;
                fs::write(&path, encode_spill(part))
            };
            write().map_err(|e| format!("spill write failed: {e}"))?;
        }
        Ok(TaskOutcome::Succeeded {
            counters: out.counters,
            output: None,
        })
    }

    fn fetch_spill(&self, spec: &LaunchSpec, src: &MapOutputRef, ctx: &mut ExecContext<'_>) -> Option<Vec<u8>> {
        let map_task = TaskId {
            job: spec.task.job.clone(),
            kind: TaskKind::Map,
            index: src.map,
        };
        let dir = ctx.runner_dirs.get(&src.node)?;
        let path = spill_path(dir, &map_task, src.attempt, spec.task.index);
        if src.node == self.node {
            return fs::read(path).ok();
        }
        let req = format!("{map_task}_a{} part {}", src.attempt, spec.task.index);
        let ask = Message::new(self.node, src.node, MessageKind::FetchSpill, req.into_bytes());
        if !ctx.fabric.transfer(ask).ok()?.reaches_destination() {
            return None;
        }
        let bytes = fs::read(path).ok()?;
        let reply = Message::new(src.node, self.node, MessageKind::SpillContent, bytes.clone());
        ctx.fabric
            .transfer(reply)
            .ok()?
            .reaches_destination()
            .then_some(bytes)
    }

    fn execute_reduce(&self, spec: &LaunchSpec, ctx: &mut ExecContext<'_>) -> Result<TaskOutcome, String> {
        let reduce_fn = ctx
            .registry
            .reduce(&spec.reduce_fn)
            .ok_or_else(|| format!("unknown reduce function {}", spec.reduce_fn))?;
        let mut spills = Vec::with_capacity(spec.map_outputs.len());
        for src in &spec.map_outputs {
            let fetched = self
                .fetch_spill(spec, src, ctx)
                .and_then(|b| decode_spill(&b).ok());
            match fetched {
                Some(pairs) => spills.push(pairs),
                None => {
                    ctx.fabric.record(format_args!(
                        "fetch-failed {} map={} from={}",
                        spec.attempt_name(),
                        src.map,
                        src.node
                    ));
                    return Ok(TaskOutcome::FetchFailed {
                        map: src.map,
                        node: src.node,
                    });
                }
            }
        }
        let stream = merge_spills(spills);
        let bytes = run_reduce(&stream, reduce_fn)?;
        let temp_root = format!("{}/{TEMP_DIR}", spec.output_path);
        let temp_dir = format!("{temp_root}/{}", spec.attempt_name());
        let target = format!("{temp_dir}/{}", part_name(spec.task.index));
        let mut client = ctx.client(self.node, spec.principal.clone());
        if !client.exists(&temp_root).map_err(|e| e.to_string())? {
            return Err("job output directory is gone".into());
        }
        client.mkdirs(&temp_dir, DEFAULT_DIR_MODE).map_err(|e| e.to_string())?;
        client
            .put(&target, &bytes, Mode::new(0o750), spec.replication)
            .map_err(|e| e.to_string())?;
        Ok(TaskOutcome::Succeeded {
            counters: BTreeMap::new(),
            output: Some(target),
        })
    }
}
