use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;

use serde::{Deserialize, Serialize};

use super::runner::{ExecContext, LaunchSpec, MapOutputRef, TaskOutcome, TaskReport};
use super::schedule::{schedule, PendingTask};
use super::split::{compute_splits, InputSplit};
use super::{part_name, AttemptState, JobError, JobSpec, TaskAttempt, TaskId, TaskKind, SUCCESS_MARKER, TEMP_DIR};
use crate::blockstore::{DfsError, Mode, Principal, DEFAULT_DIR_MODE};
use crate::fabric::{Message, MessageKind, NodeId, Role};

/// Next attempt for a failed one, or `None` once `max_attempts` is spent.
pub fn handle_task_failure(failed: &TaskAttempt, max_attempts: u32) -> Option<TaskAttempt> {
    (failed.attempt < max_attempts).then(|| TaskAttempt {
        task: failed.task.clone(),
        attempt: failed.attempt + 1,
        node: None,
        state: AttemptState::Pending,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum JobState {
    Running,
    Succeeded,
    Failed(String),
}

impl JobState {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, JobState::Running)
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JobState::Running => f.write_str("Running"),
            JobState::Succeeded => f.write_str("Succeeded"),
            JobState::Failed(_) => f.write_str("Failed"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub maps_pct: u32,
    pub reduces_pct: u32,
    pub state: JobState,
}

impl fmt::Display for JobStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} map {}% reduce {}% {}",
            self.job_id, self.maps_pct, self.reduces_pct, self.state
        )
    }
}

#[derive(Debug, Clone)]
pub struct TaskState {
    /// Never empty; the last entry is the live attempt.
    pub attempts: Vec<TaskAttempt>,
    pub preferred: BTreeSet<NodeId>,
    pub counters: BTreeMap<String, u64>,
    pub output: Option<String>,
}

impl TaskState {
    fn new(task: TaskId, preferred: BTreeSet<NodeId>) -> Self {
        TaskState {
            attempts: vec![TaskAttempt {
                task,
                attempt: 1,
                node: None,
                state: AttemptState::Pending,
            }],
            preferred,
            counters: BTreeMap::new(),
            output: None,
        }
    }

    pub fn current(&self) -> &TaskAttempt {
        self.attempts.last().expect("at least one attempt")
    }

    fn current_mut(&mut self) -> &mut TaskAttempt {
        self.attempts.last_mut().expect("at least one attempt")
    }

    pub fn succeeded(&self) -> bool {
        self.current().state == AttemptState::Succeeded
    }
}

fn pct(done: usize, total: usize) -> u32 {
    (done * 100).checked_div(total).map_or(100, |p| p as u32)
}

#[derive(Debug, Clone)]
pub struct Job {
    pub spec: JobSpec,
    pub principal: Principal,
    pub replication: u16,
    pub splits: Vec<InputSplit>,
    pub maps: Vec<TaskState>,
    pub reduces: Vec<TaskState>,
    pub state: JobState,
}

impl Job {
    pub fn maps_complete(&self) -> bool {
        self.maps.iter().all(TaskState::succeeded)
    }

    pub fn status(&self) -> JobStatus {
        let done = |ts: &[TaskState]| ts.iter().filter(|t| t.succeeded()).count();
        JobStatus {
            job_id: self.spec.job_id.clone(),
            maps_pct: pct(done(&self.maps), self.maps.len()),
            reduces_pct: pct(done(&self.reduces), self.reduces.len()),
            state: self.state.clone(),
        }
    }

    /// Counters of the map attempts that currently count as succeeded.
    pub fn counters(&self) -> BTreeMap<String, u64> {
        let mut out = BTreeMap::new();
        for m in self.maps.iter().filter(|m| m.succeeded()) {
            for (k, v) in &m.counters {
                *out.entry(k.clone()).or_default() += v;
            }
        }
        out
    }

    fn task_mut(&mut self, task: &TaskId) -> Option<&mut TaskState> {
        match task.kind {
            TaskKind::Map => self.maps.get_mut(task.index as usize),
            TaskKind::Reduce => self.reduces.get_mut(task.index as usize),
        }
    }

    fn tasks(&self) -> impl Iterator<Item = &TaskState> {
        self.maps.iter().chain(&self.reduces)
    }
}

/// JobMaster daemon state. All scheduling decisions happen here, one call at
/// a time.
#[derive(Debug, Clone)]
pub struct JobMaster {
    pub node: NodeId,
    pub slots_per_runner: usize,
    jobs: BTreeMap<String, Job>,
    suspects: BTreeSet<NodeId>,
}

impl JobMaster {
    pub fn new(node: NodeId, slots_per_runner: usize) -> Self {
        JobMaster {
            node,
            slots_per_runner,
            jobs: BTreeMap::new(),
            suspects: BTreeSet::new(),
        }
    }

    pub fn job(&self, id: &str) -> Option<&Job> {
        self.jobs.get(id)
    }

    pub fn job_status(&self, id: &str) -> Result<JobStatus, JobError> {
        self.jobs
            .get(id)
            .map(Job::status)
            .ok_or_else(|| JobError::UnknownJob(id.to_string()))
    }

    pub fn suspects(&self) -> &BTreeSet<NodeId> {
        &self.suspects
    }

    /// Validates the spec, computes splits and creates the output
    /// directories. One map task per split.
    pub fn submit(
        &mut self,
        spec: JobSpec,
        principal: Principal,
        replication: u16,
        ctx: &mut ExecContext<'_>,
    ) -> Result<(), JobError> {
        ctx.registry
            .map(&spec.map_fn)
            .ok_or_else(|| JobError::UnknownFunction(spec.map_fn.clone()))?;
        ctx.registry
            .reduce(&spec.reduce_fn)
            .ok_or_else(|| JobError::UnknownFunction(spec.reduce_fn.clone()))?;
        if spec.num_reduces == 0 {
            return Err(JobError::Invalid("at least one reduce is required".into()));
        }
        if spec.max_attempts == 0 {
            return Err(JobError::Invalid("max_attempts must be at least 1".into()));
        }
        if self.jobs.contains_key(&spec.job_id) {
            return Err(JobError::Invalid(format!("duplicate job id {}", spec.job_id)));
        }
        let me = self.node;
        let splits = {
            let mut client = ctx.client(me, principal.clone());
            if client.exists(&spec.output_path)? {
                return Err(JobError::OutputExists(spec.output_path.clone()));
            }
            let splits = compute_splits(&mut client, &spec.input_paths)?;
            client.mkdirs(&spec.output_path, DEFAULT_DIR_MODE)?;
            client.mkdirs(&format!("{}/{TEMP_DIR}", spec.output_path), DEFAULT_DIR_MODE)?;
            splits
        };
        let task = |kind, index| TaskId {
            job: spec.job_id.clone(),
            kind,
            index,
        };
        let maps = splits
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let hosts: BTreeSet<u32> = ctx
                    .master
                    .holders(s.block)
                    .iter()
                    .filter_map(|n| ctx.fabric.node(*n).map(|n| n.host))
                    .collect();
                let preferred = ctx
                    .fabric
                    .nodes()
                    .filter(|n| n.role == Role::TaskRunner && hosts.contains(&n.host))
                    .map(|n| n.id)
                    .collect();
                TaskState::new(task(TaskKind::Map, i as u32), preferred)
            })
            .collect::<Vec<_>>();
        let reduces = (0..spec.num_reduces)
            .map(|i| TaskState::new(task(TaskKind::Reduce, i), BTreeSet::new()))
            .collect();
        ctx.fabric.record(format_args!(
            "submit {} maps={} reduces={}",
            spec.job_id,
            maps.len(),
            spec.num_reduces
        ));
        self.jobs.insert(
            spec.job_id.clone(),
            Job {
                spec,
                principal,
                replication,
                splits,
                maps,
                reduces,
                state: JobState::Running,
            },
        );
        Ok(())
    }

    fn free_slots(&self, ctx: &ExecContext<'_>) -> BTreeMap<NodeId, usize> {
        let live: Vec<NodeId> = ctx
            .fabric
            .nodes()
            .filter(|n| n.role == Role::TaskRunner && n.is_alive())
            .map(|n| n.id)
            .collect();
        let trusted: Vec<NodeId> = live.iter().copied().filter(|n| !self.suspects.contains(n)).collect();
        // suspicion never idles the whole cluster
        let usable = if trusted.is_empty() { live } else { trusted };
        let mut free: BTreeMap<NodeId, usize> = usable.into_iter().map(|n| (n, self.slots_per_runner)).collect();
        for job in self.jobs.values().filter(|j| !j.state.is_terminal()) {
            for t in job.tasks() {
                let a = t.current();
                if a.state == AttemptState::Running {
                    if let Some(slots) = a.node.and_then(|n| free.get_mut(&n)) {
                        *slots = slots.saturating_sub(1);
                    }
                }
            }
        }
        free
    }

    /// Assigns pending attempts to free slots and sends LaunchTask messages.
    pub fn assign(&mut self, ctx: &mut ExecContext<'_>) {
        let mut free = self.free_slots(ctx);
        let ids: Vec<String> = self.jobs.keys().cloned().collect();
        for id in ids {
            let job = self.jobs.get_mut(&id).expect("present");
            if job.state.is_terminal() {
                continue;
            }
            let pending: Vec<PendingTask> = job
                .tasks()
                .filter(|t| t.current().state == AttemptState::Pending)
                .map(|t| PendingTask {
                    task: t.current().task.clone(),
                    preferred: t.preferred.clone(),
                })
                .collect();
            for (task, node) in schedule(&pending, &free, job.maps_complete()) {
                *free.get_mut(&node).expect("scheduled on a free runner") -= 1;
                let map_outputs = if task.kind == TaskKind::Reduce {
                    job.maps
                        .iter()
                        .enumerate()
                        .map(|(i, m)| MapOutputRef {
                            map: i as u32,
                            attempt: m.current().attempt,
                            node: m.current().node.expect("succeeded map has a node"),
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                let split = (task.kind == TaskKind::Map).then(|| job.splits[task.index as usize].clone());
                let state = job.task_mut(&task).expect("task exists");
                let attempt = state.current_mut();
                attempt.state = AttemptState::Running;
                attempt.node = Some(node);
                let launch = LaunchSpec {
                    task: task.clone(),
                    attempt: attempt.attempt,
                    principal: job.principal.clone(),
                    map_fn: job.spec.map_fn.clone(),
                    reduce_fn: job.spec.reduce_fn.clone(),
                    num_reduces: job.spec.num_reduces,
                    replication: job.replication,
                    output_path: job.spec.output_path.clone(),
                    split,
                    map_outputs,
                };
                ctx.fabric
                    .record(format_args!("assign {} -> {node}", launch.attempt_name()));
                let payload = serde_json::to_vec(&launch).expect("launch spec serializes");
                // a lost launch surfaces through failure detection
                let _ = ctx
                    .fabric
                    .send(Message::new(self.node, node, MessageKind::LaunchTask, payload));
            }
        }
    }

    /// Applies a runner's report. Reports for attempts that are no longer
    /// current are ignored.
    pub fn on_report(&mut self, report: TaskReport, ctx: &mut ExecContext<'_>) {
        let Some(job) = self.jobs.get_mut(&report.task.job) else {
            return;
        };
        if job.state.is_terminal() {
            return;
        }
        let max = job.spec.max_attempts;
        let Some(state) = job.task_mut(&report.task) else {
            return;
        };
        let cur = state.current();
        if cur.attempt != report.attempt || cur.state != AttemptState::Running || cur.node != Some(report.node) {
            ctx.fabric.record(format_args!(
                "stale-report {}_a{} from {}",
                report.task, report.attempt, report.node
            ));
            return;
        }
        let name = format!("{}_a{}", report.task, report.attempt);
        match report.outcome {
            TaskOutcome::Succeeded { counters, output } => {
                state.current_mut().state = AttemptState::Succeeded;
                state.counters = counters;
                state.output = output;
                ctx.fabric.record(format_args!("succeeded {name} on {}", report.node));
                if report.task.kind == TaskKind::Reduce {
                    self.commit_reduce(&report.task, ctx);
                }
            }
            TaskOutcome::Failed(reason) => {
                ctx.fabric
                    .record(format_args!("failed {name} on {}: {reason}", report.node));
                let job_id = report.task.job.clone();
                if !retry(state, max) {
                    self.fail_job(&job_id, format!("{} exhausted {max} attempts", report.task), ctx);
                }
            }
            TaskOutcome::FetchFailed { map, node } => {
                ctx.fabric
                    .record(format_args!("failed {name}: lost output of map {map} on {node}"));
                let reduce_ok = retry(state, max);
                self.suspects.insert(node);
                let job_id = report.task.job.clone();
                let job = self.jobs.get_mut(&job_id).expect("present");
                let m = &mut job.maps[map as usize];
                let map_ok = !(m.succeeded() && m.current().node == Some(node)) || retry(m, max);
                if !(reduce_ok && map_ok) {
                    self.fail_job(&job_id, format!("{} exhausted {max} attempts", report.task), ctx);
                }
            }
        }
    }

    /// A runner was declared dead: its running attempts fail, and finished
    /// maps whose spills it held run again if a reduce still needs them.
    pub fn on_runner_death(&mut self, node: NodeId, ctx: &mut ExecContext<'_>) {
        self.suspects.remove(&node);
        let ids: Vec<String> = self.jobs.keys().cloned().collect();
        for id in ids {
            let job = self.jobs.get_mut(&id).expect("present");
            if job.state.is_terminal() {
                continue;
            }
            let max = job.spec.max_attempts;
            let reduces_left = job.reduces.iter().any(|r| !r.succeeded());
            let mut exhausted = None;
            for t in job.maps.iter_mut().chain(job.reduces.iter_mut()) {
                let cur = t.current();
                let on_node = cur.node == Some(node);
                let running = cur.state == AttemptState::Running;
                let lost_spill = cur.task.kind == TaskKind::Map && cur.state == AttemptState::Succeeded && reduces_left;
                if on_node && (running || lost_spill) {
                    ctx.fabric
                        .record(format_args!("lost {}_a{} on dead {node}", cur.task, cur.attempt));
                    if !retry(t, max) {
                        exhausted = Some(t.current().task.clone());
                    }
                }
            }
            if let Some(task) = exhausted {
                self.fail_job(&id, format!("{task} exhausted {max} attempts"), ctx);
            }
        }
    }

    /// Fails running jobs that can no longer make progress.
    pub fn check_progress(&mut self, ctx: &mut ExecContext<'_>) {
        let any_runner = ctx
            .fabric
            .nodes()
            .any(|n| n.role == Role::TaskRunner && n.is_alive());
        if any_runner {
            return;
        }
        let running: Vec<String> = self
            .jobs
            .iter()
            .filter(|(_, j)| !j.state.is_terminal())
            .map(|(id, _)| id.clone())
            .collect();
        for id in running {
            self.fail_job(&id, "no live task runners".into(), ctx);
        }
    }

    fn commit_reduce(&mut self, task: &TaskId, ctx: &mut ExecContext<'_>) {
        let me = self.node;
        let job = self.jobs.get_mut(&task.job).expect("present");
        let out = job.spec.output_path.clone();
        let temp = job.reduces[task.index as usize].output.clone();
        let principal = job.principal.clone();
        let all_done = job.reduces.iter().all(TaskState::succeeded);
        let result = (|| -> Result<(), DfsError> {
            let mut client = ctx.client(me, principal);
            if let Some(temp) = temp {
                client.rename(&temp, &format!("{out}/{}", part_name(task.index)))?;
            }
            if all_done {
                client.delete(&format!("{out}/{TEMP_DIR}"))?;
                client.put(&format!("{out}/{SUCCESS_MARKER}"), &[], Mode::new(0o750), 1)?;
            }
            Ok(())
        })();
        match result {
            Err(e) => self.fail_job(&task.job, format!("commit of {task} failed: {e}"), ctx),
            Ok(()) if all_done => {
                let job = self.jobs.get_mut(&task.job).expect("present");
                job.state = JobState::Succeeded;
                ctx.fabric.record(format_args!("job {} succeeded", task.job));
                cleanup_spills(&task.job, ctx);
            }
            Ok(()) => {}
        }
    }

    fn fail_job(&mut self, id: &str, reason: String, ctx: &mut ExecContext<'_>) {
        let me = self.node;
        let Some(job) = self.jobs.get_mut(id) else {
            return;
        };
        if job.state.is_terminal() {
            return;
        }
        ctx.fabric.record(format_args!("job {id} failed: {reason}"));
        job.state = JobState::Failed(reason);
        let (out, principal) = (job.spec.output_path.clone(), job.principal.clone());
        let mut client = ctx.client(me, principal);
        // partial output is removed; a missing directory is already clean
        let _ = client.delete(&out);
        cleanup_spills(id, ctx);
    }
}

fn retry(state: &mut TaskState, max: u32) -> bool {
    state.current_mut().state = AttemptState::Failed;
    match handle_task_failure(state.current(), max) {
        Some(next) => {
            state.attempts.push(next);
            true
        }
        None => false,
    }
}

fn cleanup_spills(job: &str, ctx: &mut ExecContext<'_>) {
    for (node, dir) in ctx.runner_dirs {
        if ctx.fabric.is_up(*node) {
            let _ = fs::remove_dir_all(dir.join(job));
        }
    }
}
