use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::clock::{Clock, ClockMode};
use super::events::EventLog;
use super::fault::{FaultAction, FaultScript};
use super::message::{decode_frame, DeliveryOutcome, Message};
use super::node::{NodeId, NodeInfo, NodeState, Role};
use super::FabricError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FabricConfig {
    pub heartbeat_interval_ms: u64,
    pub heartbeat_timeout_intervals: u64,
    /// Largest payload a single frame may carry.
    pub max_frame_bytes: usize,
    /// Base one-way latency is `1 + uniform(0..=max_jitter_ms)`.
    pub max_jitter_ms: u64,
}

impl Default for FabricConfig {
    fn default() -> Self {
        FabricConfig {
            heartbeat_interval_ms: 1000,
            heartbeat_timeout_intervals: 3,
            max_frame_bytes: 2 << 20,
            max_jitter_ms: 4,
        }
    }
}

impl FabricConfig {
    pub fn heartbeat_timeout_ms(&self) -> u64 {
        self.heartbeat_interval_ms * self.heartbeat_timeout_intervals
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InFlight {
    deliver_at: u64,
    order: u64,
    src: NodeId,
    dst: NodeId,
    seq: u64,
    frame: Vec<u8>,
}

/// Something that happened while draining the fabric up to a time bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FabricEvent {
    /// A scheduled fault was applied.
    Fault(FaultAction),
    /// A message reached a live destination.
    Deliver(Message),
}

/// In-process message bus with membership, failure detection and fault
/// injection.
///
/// Everything nondeterministic is drawn from one seeded generator and every
/// decision is logged, so a run is a pure function of the seed and the
/// sequence of calls made against it.
#[derive(Debug)]
pub struct Fabric {
    config: FabricConfig,
    clock: Clock,
    seed: u64,
    nodes: BTreeMap<NodeId, NodeInfo>,
    // Ground truth: nodes that are not running (killed or fenced).
    crashed: BTreeSet<NodeId>,
    partitions: Vec<(BTreeSet<NodeId>, BTreeSet<NodeId>)>,
    delays: BTreeMap<NodeId, u64>,
    channel_seq: BTreeMap<(NodeId, NodeId), u64>,
    in_flight: BTreeMap<(u64, u64), InFlight>,
    faults: BTreeMap<(u64, u64), FaultAction>,
    order: u64,
    rng: ChaCha8Rng,
    next_daemon_id: u32,
    log: EventLog,
}

impl Fabric {
    pub fn new(config: FabricConfig, mode: ClockMode) -> Self {
        let seed = match mode {
            ClockMode::Simulated { seed } => seed,
            ClockMode::Real => rand::random(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let next_daemon_id = 1000 + rng.gen_range(0..9000);
        Fabric {
            config,
            clock: Clock::new(mode, 0),
            seed,
            nodes: BTreeMap::new(),
            crashed: BTreeSet::new(),
            partitions: Vec::new(),
            delays: BTreeMap::new(),
            channel_seq: BTreeMap::new(),
            in_flight: BTreeMap::new(),
            faults: BTreeMap::new(),
            order: 0,
            rng,
            next_daemon_id,
            log: EventLog::default(),
        }
    }

    pub fn config(&self) -> &FabricConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn clock_mode(&self) -> ClockMode {
        self.clock.mode()
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn record(&mut self, what: impl std::fmt::Display) {
        let now = self.now();
        self.log.record(now, what);
    }

    /// Registers a new daemon. It starts Alive with a fresh daemon id.
    pub fn add_node(&mut self, role: Role, host: u32) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        let daemon_id = self.next_daemon_id;
        self.next_daemon_id += 1;
        let now = self.now();
        self.nodes.insert(
            id,
            NodeInfo {
                id,
                role,
                host,
                state: NodeState::Alive,
                last_heartbeat: now,
                daemon_id,
            },
        );
        self.record(format_args!("spawn {id} {role} daemon={daemon_id} host={host}"));
        id
    }

    pub fn node(&self, id: NodeId) -> Option<&NodeInfo> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeInfo> {
        self.nodes.values()
    }

    pub fn known_nodes(&self) -> BTreeSet<NodeId> {
        self.nodes.keys().copied().collect()
    }

    pub fn nodes_with_role(&self, role: Role) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.role == role)
            .map(|n| n.id)
            .collect()
    }

    /// First node with the given role, if any.
    pub fn find_role(&self, role: Role) -> Option<NodeId> {
        self.nodes.values().find(|n| n.role == role).map(|n| n.id)
    }

    /// True when the daemon process is running (not killed, not fenced).
    pub fn is_up(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id) && !self.crashed.contains(&id)
    }

    /// Membership view: Alive per the failure detector.
    pub fn is_alive(&self, id: NodeId) -> bool {
        self.nodes.get(&id).is_some_and(|n| n.is_alive())
    }

    fn partitioned(&self, a: NodeId, b: NodeId) -> bool {
        self.partitions.iter().any(|(x, y)| {
            (x.contains(&a) && y.contains(&b)) || (x.contains(&b) && y.contains(&a))
        })
    }

    fn decide(&mut self, msg: &mut Message) -> Result<DeliveryOutcome, FabricError> {
        if !self.nodes.contains_key(&msg.dst) {
            return Err(FabricError::UnknownNode(msg.dst));
        }
        if !self.nodes.contains_key(&msg.src) {
            return Err(FabricError::UnknownNode(msg.src));
        }
        if self.crashed.contains(&msg.src) {
            return Err(FabricError::SourceDown(msg.src));
        }
        if msg.payload.len() > self.config.max_frame_bytes {
            return Err(FabricError::FrameTooLarge {
                len: msg.payload.len(),
                max: self.config.max_frame_bytes,
            });
        }
        let seq = self.channel_seq.entry((msg.src, msg.dst)).or_insert(0);
        *seq += 1;
        msg.seq = *seq;
        if self.crashed.contains(&msg.dst) || self.partitioned(msg.src, msg.dst) {
            return Ok(DeliveryOutcome::Dropped);
        }
        let delay = self.delays.get(&msg.src).copied().unwrap_or(0)
            + if msg.src != msg.dst {
                self.delays.get(&msg.dst).copied().unwrap_or(0)
            } else {
                0
            };
        Ok(if delay > 0 {
            DeliveryOutcome::Delayed(delay)
        } else {
            DeliveryOutcome::Delivered
        })
    }

    /// Asynchronous send: the message is queued for delivery after the
    /// channel latency (plus any injected delay).
    pub fn send(&mut self, mut msg: Message) -> Result<DeliveryOutcome, FabricError> {
        let outcome = self.decide(&mut msg)?;
        let now = self.now();
        let at = match outcome {
            DeliveryOutcome::Dropped => None,
            DeliveryOutcome::Delivered => Some(now + self.latency()),
            DeliveryOutcome::Delayed(extra) => Some(now + self.latency() + extra),
        };
        self.record(format_args!(
            "send {}->{} {:?}#{} len={} {:?}",
            msg.src,
            msg.dst,
            msg.kind,
            msg.seq,
            msg.payload.len(),
            outcome
        ));
        if let Some(deliver_at) = at {
            self.order += 1;
            self.in_flight.insert(
                (deliver_at, self.order),
                InFlight {
                    deliver_at,
                    order: self.order,
                    src: msg.src,
                    dst: msg.dst,
                    seq: msg.seq,
                    frame: msg.encode_frame(),
                },
            );
        }
        Ok(outcome)
    }

    /// Synchronous request on the data path. The fabric decides whether the
    /// destination is reachable and logs it; the caller applies the effect.
    pub fn transfer(&mut self, mut msg: Message) -> Result<DeliveryOutcome, FabricError> {
        let outcome = self.decide(&mut msg)?;
        self.record(format_args!(
            "rpc {}->{} {:?}#{} len={} {:?}",
            msg.src,
            msg.dst,
            msg.kind,
            msg.seq,
            msg.payload.len(),
            outcome
        ));
        Ok(outcome)
    }

    fn latency(&mut self) -> u64 {
        1 + self.rng.gen_range(0..=self.config.max_jitter_ms)
    }

    /// Schedules a fault script relative to the current time. Events due now
    /// are applied immediately.
    pub fn inject(&mut self, script: &FaultScript) -> Result<(), FabricError> {
        script.validate(&self.known_nodes())?;
        let now = self.now();
        for ev in &script.events {
            self.order += 1;
            self.faults
                .insert((now + ev.at_ms, self.order), ev.action.clone());
        }
        self.record(format_args!("inject {} fault events", script.events.len()));
        while let Some((&key, _)) = self.faults.first_key_value() {
            if key.0 > now {
                break;
            }
            let action = self.faults.remove(&key).expect("present");
            self.apply_fault(&action);
        }
        Ok(())
    }

    pub fn pending_faults(&self) -> usize {
        self.faults.len()
    }

    fn apply_fault(&mut self, action: &FaultAction) {
        match action {
            FaultAction::Kill(n) => {
                self.crashed.insert(*n);
                // Masters are not monitored by anyone; their death is immediate.
                if let Some(info) = self.nodes.get_mut(n) {
                    if info.role.is_master() {
                        info.state = NodeState::Dead;
                    }
                }
            }
            FaultAction::Partition(a, b) => self.partitions.push((a.clone(), b.clone())),
            FaultAction::Heal => {
                self.partitions.clear();
                self.delays.clear();
            }
            FaultAction::Delay(n, ms) => {
                self.delays.insert(*n, *ms);
            }
        }
        self.record(format_args!("fault {action}"));
    }

    /// Kills a node right now.
    pub fn kill(&mut self, node: NodeId) -> Result<(), FabricError> {
        self.inject(&FaultScript::new().push(0, FaultAction::Kill(node)))
    }

    /// Pops the next fault or delivery due at or before `until`, advancing the
    /// clock to its time. Faults win ties so a kill at `t` precedes any
    /// delivery at `t`. Messages whose destination is down are dropped here.
    pub fn next_event(&mut self, until: u64) -> Option<FabricEvent> {
        loop {
            let fault_at = self.faults.first_key_value().map(|(k, _)| *k);
            let msg_at = self.in_flight.first_key_value().map(|(k, _)| *k);
            let take_fault = match (fault_at, msg_at) {
                (None, None) => return None,
                (Some(f), None) => f.0 <= until,
                (None, Some(_)) => false,
                (Some(f), Some(m)) => f.0 <= until && f.0 <= m.0,
            };
            if take_fault {
                let (key, action) = self.faults.pop_first().expect("present");
                self.clock.advance_to(key.0);
                self.apply_fault(&action);
                return Some(FabricEvent::Fault(action));
            }
            let key = msg_at?;
            if key.0 > until {
                return None;
            }
            let env = self.in_flight.remove(&key).expect("present");
            self.clock.advance_to(env.deliver_at);
            let (kind, payload, _) = decode_frame(&env.frame, usize::MAX)
                .ok()
                .flatten()
                .expect("frames on the bus are well formed");
            if self.crashed.contains(&env.dst) {
                self.record(format_args!(
                    "drop {}->{} {:?}#{} dst down",
                    env.src, env.dst, kind, env.seq
                ));
                continue;
            }
            self.record(format_args!(
                "deliver {}->{} {:?}#{}",
                env.src, env.dst, kind, env.seq
            ));
            return Some(FabricEvent::Deliver(Message {
                src: env.src,
                dst: env.dst,
                kind,
                payload,
                seq: env.seq,
            }));
        }
    }

    /// Moves the clock to `t` (after the caller drained `next_event(t)`).
    pub fn advance_to(&mut self, t: u64) {
        self.clock.advance_to(t);
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    /// Records a heartbeat received by a master at time `at`.
    pub fn record_heartbeat(&mut self, node: NodeId, at: u64) {
        if let Some(info) = self.nodes.get_mut(&node) {
            if info.is_alive() && at > info.last_heartbeat {
                info.last_heartbeat = at;
            }
        }
    }

    /// Failure detection. A monitored node becomes Dead when
    /// `now - last_heartbeat > timeout_intervals * interval`. Each transition
    /// is reported exactly once, and the dead node is fenced so it never
    /// rejoins.
    pub fn process_heartbeats(&mut self, now: u64) -> Vec<NodeId> {
        let timeout = self.config.heartbeat_timeout_ms();
        let newly_dead: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|n| n.is_alive() && !n.role.is_master())
            .filter(|n| now.saturating_sub(n.last_heartbeat) > timeout)
            .map(|n| n.id)
            .collect();
        for id in &newly_dead {
            let info = self.nodes.get_mut(id).expect("present");
            info.state = NodeState::Dead;
            let (role, age) = (info.role, now - info.last_heartbeat);
            self.crashed.insert(*id);
            self.record(format_args!("dead {id} {role} heartbeat_age={age}"));
        }
        newly_dead
    }

    /// One `(daemon id, daemon name)` per daemon not known to be dead.
    pub fn status(&self) -> Vec<(u32, &'static str)> {
        self.nodes
            .values()
            .filter(|n| n.is_alive())
            .map(|n| (n.daemon_id, n.role.daemon_name()))
            .collect()
    }

    pub fn snapshot(&self) -> FabricSnapshot {
        FabricSnapshot {
            config: self.config,
            mode: self.clock.mode(),
            now_ms: self.now(),
            seed: self.seed,
            nodes: self.nodes.values().cloned().collect(),
            crashed: self.crashed.iter().copied().collect(),
            partitions: self.partitions.clone(),
            delays: self.delays.iter().map(|(k, v)| (*k, *v)).collect(),
            channel_seq: self
                .channel_seq
                .iter()
                .map(|(&(a, b), &s)| (a, b, s))
                .collect(),
            in_flight: self.in_flight.values().cloned().collect(),
            faults: self
                .faults
                .iter()
                .map(|(&(at, order), a)| (at, order, a.clone()))
                .collect(),
            order: self.order,
            rng: self.rng.clone(),
            next_daemon_id: self.next_daemon_id,
        }
    }

    pub fn restore(snap: FabricSnapshot) -> Self {
        Fabric {
            config: snap.config,
            clock: Clock::new(snap.mode, snap.now_ms),
            seed: snap.seed,
            nodes: snap.nodes.into_iter().map(|n| (n.id, n)).collect(),
            crashed: snap.crashed.into_iter().collect(),
            partitions: snap.partitions,
            delays: snap.delays.into_iter().collect(),
            channel_seq: snap
                .channel_seq
                .into_iter()
                .map(|(a, b, s)| ((a, b), s))
                .collect(),
            in_flight: snap
                .in_flight
                .into_iter()
                .map(|f| ((f.deliver_at, f.order), f))
                .collect(),
            faults: snap
                .faults
                .into_iter()
                .map(|(at, order, a)| ((at, order), a))
                .collect(),
            order: snap.order,
            rng: snap.rng,
            next_daemon_id: snap.next_daemon_id,
            log: EventLog::default(),
        }
    }

    /// A 64-bit value from the fabric's generator.
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// Serializable fabric state, used to persist a running cluster between
/// operator commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FabricSnapshot {
    config: FabricConfig,
    mode: ClockMode,
    now_ms: u64,
    seed: u64,
    nodes: Vec<NodeInfo>,
    crashed: Vec<NodeId>,
    partitions: Vec<(BTreeSet<NodeId>, BTreeSet<NodeId>)>,
    delays: Vec<(NodeId, u64)>,
    channel_seq: Vec<(NodeId, NodeId, u64)>,
    in_flight: Vec<InFlight>,
    faults: Vec<(u64, u64, FaultAction)>,
    order: u64,
    rng: ChaCha8Rng,
    next_daemon_id: u32,
}
