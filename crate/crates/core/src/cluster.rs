//! A whole cluster: daemons on the fabric, their on-disk state under the
//! storage root, and the control loop that advances them together.
//!
//! Layout under the storage root:
//!
//! ```text
//! cluster.state            running-cluster marker and fabric snapshot
//! format.generation        count of formats, survives reformatting
//! namespace/fsimage        authoritative namespace image
//! checkpoint/fsimage-N     checkpoint node snapshots
//! blocknodes/node-<id>/    <block>.blk + <block>.crc
//! taskrunners/node-<id>/   map spills
//! jobs/<jobId>.status      final job status
//! logs/events.log          ordered event log
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blockstore::{
    block_payload, decode_image, encode_image, live_block_nodes, parse_block_payload, write_checkpoint, BlockId,
    BlockNode, BlockStorage, DfsClient, DfsError, Namespace, NamespaceMaster, Principal, ReplicaVerdict,
    ReplicationPlan,
};
use crate::config::ClusterConfig;
use crate::error::{Error, Result};
use crate::fabric::{
    ClockMode, Fabric, FabricEvent, FabricSnapshot, FaultScript, Message, MessageKind, NodeId, Role,
};
use crate::jobs::builtin_registry;
use crate::mapreduce::{
    ExecContext, FunctionRegistry, JobError, JobMaster, JobSpec, JobState, JobStatus, LaunchSpec, TaskKind,
    TaskReport, TaskRunner,
};

pub const SLOTS_PER_RUNNER: usize = 2;
/// Block nodes attach a block report to every this many heartbeats.
pub const REPORT_EVERY: u64 = 3;
pub const CHECKPOINT_INTERVAL_MS: u64 = 60_000;
/// Re-replication requests are retried after this many heartbeat intervals.
pub const REPAIR_TIMEOUT_INTERVALS: u64 = 5;
/// A job that has not finished after this much cluster time is failed.
pub const JOB_TIME_LIMIT_MS: u64 = 3_600_000;

const MAP_BASE_MS: u64 = 150;
const MAP_SPREAD_MS: u64 = 250;
const REDUCE_BASE_MS: u64 = 100;
const REDUCE_SPREAD_MS: u64 = 200;

const REPORT_RECEIVED: u8 = 0;
const REPORT_CORRUPT: u8 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClusterState {
    fabric: FabricSnapshot,
    next_tick_ms: u64,
    next_heartbeat_ms: u64,
    heartbeat_rounds: u64,
    job_seq: u64,
    checkpoint_seq: u64,
    last_checkpoint_ms: u64,
}

fn state_path(root: &Path) -> PathBuf {
    root.join("cluster.state")
}

fn image_path(root: &Path) -> PathBuf {
    root.join("namespace").join("fsimage")
}

fn generation_path(root: &Path) -> PathBuf {
    root.join("format.generation")
}

fn log_path(root: &Path) -> PathBuf {
    root.join("logs").join("events.log")
}

fn job_status_path(root: &Path, id: &str) -> PathBuf {
    root.join("jobs").join(format!("{id}.status"))
}

/// Highest sequence among persisted job status files; ids never repeat across restarts.
fn last_job_seq(root: &Path) -> u64 {
    let Ok(dir) = fs::read_dir(root.join("jobs")) else {
        return 0;
    };
    dir.filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            name.strip_prefix("job_")?.strip_suffix(".status")?.parse::<u64>().ok()
        })
        .max()
        .unwrap_or(0)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |e| Error::io(path, e);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

pub fn is_running(root: &Path) -> bool {
    state_path(root).exists()
}

/// Creates an empty namespace with a fresh id, discarding all blocks, spills,
/// checkpoints, job records and logs.
///
/// In simulated mode the id is a function of the seed and the number of
/// earlier formats of this root, so runs are reproducible while successive
/// formats still differ.
pub fn format(config: &ClusterConfig) -> Result<u64> {
    let root = &config.storage_root;
    if is_running(root) {
        return Err(Error::Busy);
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let gen_path = generation_path(root);
    let generation = match fs::read_to_string(&gen_path) {
        Ok(t) => t.trim().parse::<u64>().unwrap_or(0) + 1,
        Err(e) if e.kind() == io::ErrorKind::NotFound => 1,
        Err(e) => return Err(Error::io(&gen_path, e)),
    };
    write_atomic(&gen_path, format!("{generation}\n").as_bytes())?;
    let namespace_id = match config.clock {
        ClockMode::Simulated { seed } => {
            ChaCha8Rng::seed_from_u64(seed ^ generation.wrapping_mul(0x9e37_79b9_7f4a_7c15)).next_u64()
        }
        ClockMode::Real => rand::random(),
    };
    for dir in ["namespace", "checkpoint", "blocknodes", "taskrunners", "jobs", "logs"] {
        let p = root.join(dir);
        match fs::remove_dir_all(&p) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(p, e)),
        }
    }
    let ns = Namespace::fresh(namespace_id, config.block_size_bytes);
    write_atomic(&image_path(root), encode_image(&ns).as_bytes())?;
    Ok(namespace_id)
}

/// Runs `job_status` against the persisted record of a finished or running
/// job.
pub fn stored_job_status(config: &ClusterConfig, id: &str) -> Result<JobStatus> {
    let path = job_status_path(&config.storage_root, id);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(JobError::UnknownJob(id.into()).into()),
        Err(e) => return Err(Error::io(path, e)),
    };
    serde_json::from_str(&text).map_err(|e| Error::io(path, io::Error::new(io::ErrorKind::InvalidData, e)))
}

/// Called after every control-loop tick while a job runs.
pub type JobObserver<'a> = &'a mut dyn FnMut(&mut Cluster, &JobStatus);

pub struct Cluster {
    config: ClusterConfig,
    fabric: Fabric,
    master: NamespaceMaster,
    block_nodes: BTreeMap<NodeId, BlockNode>,
    runners: BTreeMap<NodeId, TaskRunner>,
    runner_dirs: BTreeMap<NodeId, PathBuf>,
    job_master: JobMaster,
    checkpoint_node: NodeId,
    registry: FunctionRegistry,
    state: ClusterState,
    log_flushed: usize,
}

impl Cluster {
    /// Spawns every daemon and persists the running cluster. Node ids are
    /// assigned NamespaceMaster, BlockNodes, CheckpointNode, JobMaster,
    /// TaskRunners; worker host `i` carries BlockNode `i` and TaskRunner `i`.
    pub fn start(config: &ClusterConfig) -> Result<Cluster> {
        config.validate()?;
        if config.block_nodes == 0 || config.task_runners == 0 {
            return Err(Error::Startup("at least one block node and one task runner are required".into()));
        }
        let root = &config.storage_root;
        if is_running(root) {
            return Err(Error::AlreadyRunning);
        }
        let image = match fs::read_to_string(image_path(root)) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(Error::NotFormatted),
            Err(e) => return Err(Error::io(image_path(root), e)),
        };
        let ns = decode_image(&image)?;
        let mut fabric = Fabric::new(config.fabric_config(), config.clock);
        let nm = fabric.add_node(Role::NamespaceMaster, 0);
        for i in 0..config.block_nodes {
            fabric.add_node(Role::BlockNode, i + 1);
        }
        let ck = fabric.add_node(Role::CheckpointNode, 0);
        fabric.add_node(Role::JobMaster, 0);
        for i in 0..config.task_runners {
            fabric.add_node(Role::TaskRunner, i + 1);
        }
        let now = fabric.now();
        for id in fabric.known_nodes() {
            fabric.record_heartbeat(id, now);
        }
        let state = ClusterState {
            fabric: fabric.snapshot(),
            next_tick_ms: now,
            next_heartbeat_ms: now,
            heartbeat_rounds: 0,
            job_seq: last_job_seq(root),
            checkpoint_seq: crate::blockstore::latest_checkpoint(&root.join("checkpoint"))
                .map_err(|e| Error::io(root.join("checkpoint"), e))?
                .unwrap_or(0),
            last_checkpoint_ms: now,
        };
        let _ = (nm, ck);
        let mut cluster = Cluster::assemble(config, fabric, ns, state)?;
        cluster.fabric.record("cluster started");
        cluster.save()?;
        Ok(cluster)
    }

    /// Reattaches to the running cluster persisted under the storage root.
    pub fn open(config: &ClusterConfig) -> Result<Cluster> {
        let root = &config.storage_root;
        let sp = state_path(root);
        let text = match fs::read_to_string(&sp) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(Error::NotRunning),
            Err(e) => return Err(Error::io(sp, e)),
        };
        let state: ClusterState = serde_json::from_str(&text)
            .map_err(|e| Error::io(&sp, io::Error::new(io::ErrorKind::InvalidData, e)))?;
        let image = fs::read_to_string(image_path(root)).map_err(|e| Error::io(image_path(root), e))?;
        let ns = decode_image(&image)?;
        let fabric = Fabric::restore(state.fabric.clone());
        Cluster::assemble(config, fabric, ns, state)
    }

    fn assemble(config: &ClusterConfig, fabric: Fabric, ns: Namespace, state: ClusterState) -> Result<Cluster> {
        let root = &config.storage_root;
        let find = |role| {
            fabric
                .find_role(role)
                .ok_or_else(|| Error::Startup(format!("cluster state has no {role}")))
        };
        let nm = find(Role::NamespaceMaster)?;
        let jm = find(Role::JobMaster)?;
        let ck = find(Role::CheckpointNode)?;
        let mut master = NamespaceMaster::new(nm, ns);
        let mut block_nodes = BTreeMap::new();
        let mut orphans = Vec::new();
        for id in fabric.nodes_with_role(Role::BlockNode) {
            let dir = root.join("blocknodes").join(format!("node-{}", id.0));
            let storage = BlockStorage::open(&dir).map_err(|e| Error::Startup(format!("{}: {e}", dir.display())))?;
            if fabric.is_up(id) {
                let held = storage.scan().map_err(|e| Error::io(&dir, e))?;
                orphans.extend(master.block_report(id, &held));
            }
            block_nodes.insert(id, BlockNode { id, storage });
        }
        for (node, block) in orphans {
            let _ = block_nodes[&node].storage.delete(block);
        }
        let mut runners = BTreeMap::new();
        let mut runner_dirs = BTreeMap::new();
        for id in fabric.nodes_with_role(Role::TaskRunner) {
            let dir = root.join("taskrunners").join(format!("node-{}", id.0));
            fs::create_dir_all(&dir).map_err(|e| Error::Startup(format!("{}: {e}", dir.display())))?;
            runners.insert(id, TaskRunner::new(id, dir.clone()));
            runner_dirs.insert(id, dir);
        }
        Ok(Cluster {
            config: config.clone(),
            fabric,
            master,
            block_nodes,
            runners,
            runner_dirs,
            job_master: JobMaster::new(jm, SLOTS_PER_RUNNER),
            checkpoint_node: ck,
            registry: builtin_registry(),
            state,
            log_flushed: 0,
        })
    }

    /// Persists the cluster so a later command can reattach.
    pub fn save(&mut self) -> Result<()> {
        let root = self.config.storage_root.clone();
        write_atomic(&image_path(&root), encode_image(self.master.namespace()).as_bytes())?;
        self.state.fabric = self.fabric.snapshot();
        let json = serde_json::to_vec(&self.state).expect("cluster state serializes");
        write_atomic(&state_path(&root), &json)?;
        self.flush_log()
    }

    fn flush_log(&mut self) -> Result<()> {
        let text = self.fabric.log().render_from(self.log_flushed);
        if text.is_empty() {
            return Ok(());
        }
        let path = log_path(&self.config.storage_root);
        let io_err = |e| Error::io(&path, e);
        fs::create_dir_all(path.parent().expect("has parent")).map_err(io_err)?;
        let mut f = fs::OpenOptions::new().create(true).append(true).open(&path).map_err(io_err)?;
        f.write_all(text.as_bytes()).map_err(io_err)?;
        self.log_flushed = self.fabric.log().len();
        Ok(())
    }

    /// Saves the namespace and tears the cluster down.
    pub fn stop(mut self) -> Result<()> {
        self.fabric.record("cluster stopped");
        self.save()?;
        let sp = state_path(&self.config.storage_root);
        fs::remove_file(&sp).map_err(|e| Error::io(sp, e))
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn fabric(&self) -> &Fabric {
        &self.fabric
    }

    pub fn fabric_mut(&mut self) -> &mut Fabric {
        &mut self.fabric
    }

    pub fn namespace_master(&self) -> &NamespaceMaster {
        &self.master
    }

    pub fn block_nodes(&self) -> &BTreeMap<NodeId, BlockNode> {
        &self.block_nodes
    }

    pub fn job_master(&self) -> &JobMaster {
        &self.job_master
    }

    pub fn runner_dir(&self, node: NodeId) -> Option<&Path> {
        self.runner_dirs.get(&node).map(PathBuf::as_path)
    }

    pub fn now(&self) -> u64 {
        self.fabric.now()
    }

    pub fn status(&self) -> Vec<(u32, &'static str)> {
        self.fabric.status()
    }

    /// Event log lines recorded by this handle since it was opened.
    pub fn event_log(&self) -> Vec<String> {
        self.fabric.log().lines().to_vec()
    }

    /// A filesystem client acting from the namespace master's host.
    pub fn client(&mut self, principal: Principal) -> DfsClient<'_> {
        let local = self.master.node();
        DfsClient::new(&mut self.fabric, &mut self.master, &self.block_nodes, local, principal)
    }

    pub fn inject(&mut self, script: &FaultScript) -> Result<()> {
        self.fabric.inject(script)?;
        Ok(())
    }

    pub fn advance(&mut self, ms: u64) {
        let t = self.now() + ms;
        self.advance_to(t);
    }

    /// Runs the control loop through every tick up to `t`.
    pub fn advance_to(&mut self, t: u64) {
        let tick = self.config.tick_ms();
        while self.state.next_tick_ms <= t {
            let at = self.state.next_tick_ms;
            self.drain(at);
            self.fabric.advance_to(at);
            self.on_tick(at);
            self.state.next_tick_ms = at + tick;
        }
        self.drain(t);
        if t > self.fabric.now() {
            self.fabric.advance_to(t);
        }
    }

    /// Runs exactly one control-loop tick.
    pub fn step(&mut self) {
        let t = self.state.next_tick_ms;
        self.advance_to(t);
    }

    fn drain(&mut self, until: u64) {
        while let Some(ev) = self.fabric.next_event(until) {
            if let FabricEvent::Deliver(msg) = ev {
                self.dispatch(msg);
            }
        }
    }

    fn live_blocks(&self) -> BTreeSet<NodeId> {
        live_block_nodes(&self.fabric)
    }

    fn send_delete(&mut self, from: NodeId, node: NodeId, block: BlockId) {
        let msg = Message::new(from, node, MessageKind::DeleteBlock, block.0.to_be_bytes().to_vec());
        let _ = self.fabric.send(msg);
    }

    fn execute_plan(&mut self, plan: ReplicationPlan) {
        let nm = self.master.node();
        for mv in plan {
            self.fabric.record(format_args!(
                "replicate block={} {} -> {}",
                mv.block, mv.source, mv.target
            ));
            let mut payload = block_payload(mv.block, &[]);
            payload.extend_from_slice(&mv.target.0.to_be_bytes());
            let _ = self
                .fabric
                .send(Message::new(nm, mv.source, MessageKind::ReplicateBlock, payload));
        }
    }

    fn exec_context(&mut self) -> (ExecContext<'_>, &mut JobMaster, &mut BTreeMap<NodeId, TaskRunner>) {
        (
            ExecContext {
                fabric: &mut self.fabric,
                master: &mut self.master,
                block_nodes: &self.block_nodes,
                runner_dirs: &self.runner_dirs,
                registry: &self.registry,
            },
            &mut self.job_master,
            &mut self.runners,
        )
    }

    fn dispatch(&mut self, msg: Message) {
        let now = self.fabric.now();
        match msg.kind {
            MessageKind::Heartbeat => {
                self.fabric.record_heartbeat(msg.src, now);
                if msg.payload.is_empty() {
                    return;
                }
                let held: BTreeSet<BlockId> = msg
                    .payload
                    .chunks_exact(8)
                    .map(|c| BlockId(u64::from_be_bytes(c.try_into().expect("8 bytes"))))
                    .collect();
                let deletions = self.master.block_report(msg.src, &held);
                for (node, block) in deletions {
                    self.send_delete(msg.dst, node, block);
                }
            }
            MessageKind::DeleteBlock => {
                if let (Some(node), Ok(bytes)) = (self.block_nodes.get(&msg.dst), <[u8; 8]>::try_from(&msg.payload[..])) {
                    let block = BlockId(u64::from_be_bytes(bytes));
                    if node.storage.delete(block).is_ok() {
                        self.fabric.record(format_args!("deleted block={block} on {}", msg.dst));
                    }
                }
            }
            MessageKind::ReplicateBlock => self.on_replicate(msg),
            MessageKind::BlockReceived => {
                let Some((block, rest)) = parse_block_payload(&msg.payload) else {
                    return;
                };
                match rest.first().copied() {
                    Some(REPORT_CORRUPT) => self.master.mark_corrupt(block, msg.src),
                    _ => match self.master.add_replica(block, msg.src) {
                        ReplicaVerdict::Accepted => {}
                        ReplicaVerdict::Unknown => self.send_delete(msg.dst, msg.src, block),
                        ReplicaVerdict::Excess(n) => self.send_delete(msg.dst, n, block),
                    },
                }
            }
            MessageKind::LaunchTask => {
                let Ok(spec) = serde_json::from_slice::<LaunchSpec>(&msg.payload) else {
                    return;
                };
                let (base, spread) = match spec.task.kind {
                    TaskKind::Map => (MAP_BASE_MS, MAP_SPREAD_MS),
                    TaskKind::Reduce => (REDUCE_BASE_MS, REDUCE_SPREAD_MS),
                };
                let finish = now + base + self.fabric.next_u64() % spread;
                self.fabric
                    .record(format_args!("launch {} on {} until {finish}", spec.attempt_name(), msg.dst));
                if let Some(r) = self.runners.get_mut(&msg.dst) {
                    r.launch(spec, finish);
                }
            }
            MessageKind::TaskStatus => {
                let Ok(report) = serde_json::from_slice::<TaskReport>(&msg.payload) else {
                    return;
                };
                let (mut ctx, jm, _) = self.exec_context();
                jm.on_report(report, &mut ctx);
            }
            other => {
                self.fabric
                    .record(format_args!("ignored {other:?} {}->{}", msg.src, msg.dst));
            }
        }
    }

    fn on_replicate(&mut self, msg: Message) {
        let Some((block, rest)) = parse_block_payload(&msg.payload) else {
            return;
        };
        let Ok(target) = <[u8; 4]>::try_from(rest).map(|b| NodeId(u32::from_be_bytes(b))) else {
            return;
        };
        let (src, nm) = (msg.dst, msg.src);
        let Some(node) = self.block_nodes.get(&src) else {
            return;
        };
        let replica = match node.storage.load(block) {
            Ok(r) if r.is_intact() => r,
            _ => {
                self.fabric
                    .record(format_args!("replicate-source-bad block={block} on {src}"));
                let mut p = block_payload(block, &[]);
                p.push(REPORT_CORRUPT);
                let _ = self.fabric.send(Message::new(src, nm, MessageKind::BlockReceived, p));
                return;
            }
        };
        let copy = Message::new(src, target, MessageKind::WriteBlock, block_payload(block, &replica.data));
        if !matches!(self.fabric.transfer(copy), Ok(o) if o.reaches_destination()) {
            return;
        }
        let Some(dst) = self.block_nodes.get(&target) else {
            return;
        };
        if dst.storage.store(block, &replica.data).is_err() {
            return;
        }
        let mut p = block_payload(block, &[]);
        p.push(REPORT_RECEIVED);
        let _ = self.fabric.send(Message::new(target, nm, MessageKind::BlockReceived, p));
    }

    fn on_tick(&mut self, now: u64) {
        let interval = self.config.heartbeat_interval_ms;
        let heartbeat_round = now >= self.state.next_heartbeat_ms;
        if heartbeat_round {
            self.send_heartbeats();
            self.state.next_heartbeat_ms += interval;
        }
        let nm = self.master.node();
        let jm = self.job_master.node;
        let dead = self.fabric.process_heartbeats(now);
        let timeout = REPAIR_TIMEOUT_INTERVALS * interval;
        for node in dead {
            match self.fabric.node(node).map(|n| n.role) {
                Some(Role::BlockNode) if self.fabric.is_up(nm) => {
                    let live = self.live_blocks();
                    let plan = self.master.handle_node_death(node, &live, now, timeout);
                    self.execute_plan(plan);
                }
                Some(Role::TaskRunner) if self.fabric.is_up(jm) => {
                    let (mut ctx, jm, _) = self.exec_context();
                    jm.on_runner_death(node, &mut ctx);
                }
                _ => {}
            }
        }
        if heartbeat_round && self.fabric.is_up(nm) {
            let live = self.live_blocks();
            for (node, block) in self.master.take_corrupt(&live) {
                self.send_delete(nm, node, block);
            }
            let plan = self.master.repair_plan(&live, now, timeout);
            self.execute_plan(plan);
        }
        if now >= self.state.last_checkpoint_ms + CHECKPOINT_INTERVAL_MS {
            self.state.last_checkpoint_ms = now;
            if let Err(e) = self.checkpoint() {
                self.fabric.record(format_args!("checkpoint failed: {e}"));
            }
        }
        self.run_tasks(now);
        if self.fabric.is_up(jm) {
            let (mut ctx, jm, _) = self.exec_context();
            jm.check_progress(&mut ctx);
            jm.assign(&mut ctx);
        }
    }

    fn send_heartbeats(&mut self) {
        let nm = self.master.node();
        let jm = self.job_master.node;
        let report = self.state.heartbeat_rounds.is_multiple_of(REPORT_EVERY);
        self.state.heartbeat_rounds += 1;
        let senders: Vec<(NodeId, Role)> = self
            .fabric
            .nodes()
            .filter(|n| !n.role.is_master())
            .map(|n| (n.id, n.role))
            .collect();
        for (id, role) in senders {
            if !self.fabric.is_up(id) {
                continue;
            }
            let dst = if role == Role::TaskRunner { jm } else { nm };
            let mut payload = Vec::new();
            if role == Role::BlockNode && report {
                if let Ok(held) = self.block_nodes[&id].storage.scan() {
                    payload = held.iter().flat_map(|b| b.0.to_be_bytes()).collect();
                }
            }
            let _ = self.fabric.send(Message::new(id, dst, MessageKind::Heartbeat, payload));
        }
    }

    fn run_tasks(&mut self, now: u64) {
        let jm_node = self.job_master.node;
        let ids: Vec<NodeId> = self.runners.keys().copied().collect();
        for id in ids {
            if !self.fabric.is_up(id) {
                continue;
            }
            let due = self.runners.get_mut(&id).expect("present").take_due(now);
            for spec in due {
                let (mut ctx, _, runners) = self.exec_context();
                let outcome = runners[&id].execute(&spec, &mut ctx);
                let report = TaskReport {
                    task: spec.task.clone(),
                    attempt: spec.attempt,
                    node: id,
                    outcome,
                };
                let verdict = match &report.outcome {
                    crate::mapreduce::TaskOutcome::Succeeded { .. } => "ok",
                    crate::mapreduce::TaskOutcome::Failed(_) => "failed",
                    crate::mapreduce::TaskOutcome::FetchFailed { .. } => "fetch-failed",
                };
                self.fabric
                    .record(format_args!("finish {} on {id} {verdict}", spec.attempt_name()));
                let payload = serde_json::to_vec(&report).expect("report serializes");
                let _ = self
                    .fabric
                    .send(Message::new(id, jm_node, MessageKind::TaskStatus, payload));
            }
        }
    }

    /// Has the checkpoint node pull the namespace image and store it.
    pub fn checkpoint(&mut self) -> Result<PathBuf> {
        let (ck, nm) = (self.checkpoint_node, self.master.node());
        let ask = Message::new(ck, nm, MessageKind::ImageRequest, Vec::new());
        if !self.fabric.transfer(ask)?.reaches_destination() {
            return Err(DfsError::MasterUnreachable.into());
        }
        let image = encode_image(self.master.namespace());
        let reply = Message::new(nm, ck, MessageKind::ImageContent, image.into_bytes());
        if !self.fabric.transfer(reply)?.reaches_destination() {
            return Err(DfsError::MasterUnreachable.into());
        }
        let seq = self.state.checkpoint_seq + 1;
        let dir = self.config.storage_root.join("checkpoint");
        let path = write_checkpoint(&dir, seq, self.master.namespace()).map_err(|e| Error::io(&dir, e))?;
        self.state.checkpoint_seq = seq;
        self.fabric.record(format_args!(
            "checkpoint {seq} entries={}",
            self.master.namespace().len()
        ));
        Ok(path)
    }

    pub fn next_job_id(&mut self) -> String {
        self.state.job_seq += 1;
        format!("job_{:04}", self.state.job_seq)
    }

    fn write_job_status(&self, status: &JobStatus) -> Result<()> {
        let json = serde_json::to_vec(status).expect("status serializes");
        write_atomic(&job_status_path(&self.config.storage_root, &status.job_id), &json)
    }

    pub fn submit_job(&mut self, spec: JobSpec, principal: Principal) -> Result<()> {
        if !self.fabric.is_up(self.job_master.node) {
            return Err(DfsError::MasterUnreachable.into());
        }
        let replication = self.config.replication;
        let id = spec.job_id.clone();
        let (mut ctx, jm, _) = self.exec_context();
        jm.submit(spec, principal, replication, &mut ctx)?;
        let status = self.job_master.job_status(&id)?;
        self.write_job_status(&status)
    }

    pub fn job_status(&self, id: &str) -> Result<JobStatus> {
        match self.job_master.job_status(id) {
            Ok(s) => Ok(s),
            Err(_) => stored_job_status(&self.config, id),
        }
    }

    /// Drives the cluster until the job finishes. Progress lines go to
    /// `progress` whenever the percentages change.
    pub fn run_job(&mut self, id: &str, progress: &mut dyn Write, observer: JobObserver<'_>) -> Result<JobStatus> {
        let start = self.now();
        let mut last = (u32::MAX, u32::MAX);
        loop {
            let mut status = self.job_master.job_status(id)?;
            if !status.state.is_terminal() {
                if !self.fabric.is_up(self.job_master.node) {
                    status.state = JobState::Failed("job master is down".into());
                } else if self.now() >= start + JOB_TIME_LIMIT_MS {
                    status.state = JobState::Failed("time limit exceeded".into());
                }
            }
            if (status.maps_pct, status.reduces_pct) != last {
                last = (status.maps_pct, status.reduces_pct);
                let _ = writeln!(progress, " map {}% reduce {}%", last.0, last.1);
            }
            if let JobState::Failed(reason) = &status.state {
                self.write_job_status(&status)?;
                return Err(JobError::Failed {
                    job: id.to_string(),
                    reason: reason.clone(),
                }
                .into());
            }
            if status.state == JobState::Succeeded {
                self.write_job_status(&status)?;
                return Ok(status);
            }
            self.step();
            let status = self.job_master.job_status(id)?;
            observer(self, &status);
        }
    }
}
