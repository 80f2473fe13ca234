use std::collections::{BTreeMap, BTreeSet};

use super::namespace::{BlockId, FileEntry, Namespace};
use super::placement::{plan_repairs, BlockLocations, BlockMeta, ReplicationPlan};
use crate::fabric::NodeId;

/// What the master decided about a replica a block node says it holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReplicaVerdict {
    Accepted,
    /// Not part of any file (deleted or never committed): remove it.
    Unknown,
    /// The block is now over-replicated; this node should drop its copy.
    Excess(NodeId),
}

/// Namespace master state: the namespace itself plus the block map, corrupt
/// replica set and in-flight repairs. Placement decisions are made here.
#[derive(Debug, Clone)]
pub struct NamespaceMaster {
    node: NodeId,
    ns: Namespace,
    blocks: BlockLocations,
    corrupt: BTreeSet<(BlockId, NodeId)>,
    /// Corrupt replicas with a deletion in flight. Ignored by block reports
    /// and never chosen as repair targets until a report shows them gone.
    condemned: BTreeSet<(BlockId, NodeId)>,
    pending: BTreeMap<BlockId, BTreeMap<NodeId, u64>>,
}

impl NamespaceMaster {
    pub fn new(node: NodeId, ns: Namespace) -> Self {
        let mut blocks = BlockLocations::new();
        for e in ns.entries() {
            for b in &e.blocks {
                blocks.insert(
                    *b,
                    BlockMeta {
                        replication: e.replication,
                        holders: BTreeSet::new(),
                    },
                );
            }
        }
        NamespaceMaster {
            node,
            ns,
            blocks,
            corrupt: BTreeSet::new(),
            condemned: BTreeSet::new(),
            pending: BTreeMap::new(),
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn namespace(&self) -> &Namespace {
        &self.ns
    }

    pub fn namespace_mut(&mut self) -> &mut Namespace {
        &mut self.ns
    }

    pub fn block_size(&self) -> u64 {
        self.ns.block_size
    }

    pub fn blocks(&self) -> &BlockLocations {
        &self.blocks
    }

    pub fn holders(&self, block: BlockId) -> BTreeSet<NodeId> {
        self.blocks
            .get(&block)
            .map(|m| m.holders.clone())
            .unwrap_or_default()
    }

    pub fn is_corrupt(&self, block: BlockId, node: NodeId) -> bool {
        self.corrupt.contains(&(block, node))
    }

    /// Replica count per node.
    pub fn load(&self) -> BTreeMap<NodeId, usize> {
        let mut load = BTreeMap::new();
        for meta in self.blocks.values() {
            for n in &meta.holders {
                *load.entry(*n).or_default() += 1;
            }
        }
        load
    }

    /// Publishes a finished write: the file's block list and where each
    /// block landed.
    pub fn commit_file(
        &mut self,
        path: &str,
        placed: Vec<(BlockId, BTreeSet<NodeId>)>,
        length: u64,
    ) -> Result<(), super::DfsError> {
        let replication = self
            .ns
            .stat(path)
            .map(|e| e.replication)
            .ok_or_else(|| super::DfsError::NotFound(path.into()))?;
        let ids = placed.iter().map(|(b, _)| *b).collect();
        self.ns.commit_blocks(path, ids, length)?;
        for (block, holders) in placed {
            self.blocks.insert(block, BlockMeta { replication, holders });
        }
        Ok(())
    }

    /// Drops block-map state for removed entries; returns the replica
    /// deletions to send.
    pub fn forget(&mut self, removed: &[FileEntry]) -> Vec<(NodeId, BlockId)> {
        let mut out = Vec::new();
        for e in removed {
            for b in &e.blocks {
                if let Some(meta) = self.blocks.remove(b) {
                    out.extend(meta.holders.into_iter().map(|n| (n, *b)));
                }
                self.pending.remove(b);
                self.corrupt.retain(|(cb, _)| cb != b);
            }
        }
        out
    }

    pub fn add_replica(&mut self, block: BlockId, node: NodeId) -> ReplicaVerdict {
        if let Some(p) = self.pending.get_mut(&block) {
            p.remove(&node);
            if p.is_empty() {
                self.pending.remove(&block);
            }
        }
        let Some(meta) = self.blocks.get_mut(&block) else {
            return ReplicaVerdict::Unknown;
        };
        if self.corrupt.contains(&(block, node)) {
            // a fresh copy replaces the corrupt one
            self.corrupt.remove(&(block, node));
        }
        meta.holders.insert(node);
        if meta.holders.len() > meta.replication as usize {
            let victim = *meta
                .holders
                .iter()
                .rev()
                .find(|n| **n != node)
                .expect("more than one holder");
            meta.holders.remove(&victim);
            return ReplicaVerdict::Excess(victim);
        }
        ReplicaVerdict::Accepted
    }

    /// Reconciles a full block report. Reports only add replicas; lost ones
    /// are found on read. Returns replica deletions to send.
    pub fn block_report(&mut self, node: NodeId, held: &BTreeSet<BlockId>) -> Vec<(NodeId, BlockId)> {
        let mut deletions = Vec::new();
        self.condemned.retain(|(b, n)| *n != node || held.contains(b));
        for b in held {
            if self.corrupt.contains(&(*b, node)) || self.condemned.contains(&(*b, node)) {
                continue;
            }
            let already = self.blocks.get(b).is_some_and(|m| m.holders.contains(&node));
            if already {
                continue;
            }
            match self.add_replica(*b, node) {
                ReplicaVerdict::Accepted => {}
                ReplicaVerdict::Unknown => deletions.push((node, *b)),
                ReplicaVerdict::Excess(victim) => deletions.push((victim, *b)),
            }
        }
        deletions
    }

    /// Marks a replica bad after a checksum mismatch. It stops being a
    /// location immediately; repair brings the count back.
    pub fn mark_corrupt(&mut self, block: BlockId, node: NodeId) {
        if let Some(meta) = self.blocks.get_mut(&block) {
            meta.holders.remove(&node);
        }
        self.corrupt.insert((block, node));
    }

    /// Corrupt replicas still sitting on live nodes, to be deleted.
    pub fn take_corrupt(&mut self, live: &BTreeSet<NodeId>) -> Vec<(NodeId, BlockId)> {
        let mut out = Vec::new();
        self.corrupt.retain(|(b, n)| {
            if live.contains(n) {
                out.push((*n, *b));
            }
            false
        });
        self.condemned.extend(out.iter().map(|(n, b)| (*b, *n)));
        out
    }

    /// Removes a dead node from every block and plans copies for exactly the
    /// blocks that lost a replica.
    pub fn handle_node_death(&mut self, node: NodeId, live: &BTreeSet<NodeId>, now: u64, timeout: u64) -> ReplicationPlan {
        let mut affected = Vec::new();
        for (b, meta) in self.blocks.iter_mut() {
            if meta.holders.remove(&node) {
                affected.push(*b);
            }
        }
        for targets in self.pending.values_mut() {
            targets.remove(&node);
        }
        self.pending.retain(|_, t| !t.is_empty());
        self.corrupt.retain(|(_, n)| *n != node);
        self.condemned.retain(|(_, n)| *n != node);
        let plan = plan_repairs(
            affected.iter().map(|b| (*b, &self.blocks[b])),
            live,
            &self.load(),
            &self.pending_targets(),
        );
        self.register(&plan, now + timeout);
        plan
    }

    /// Plans copies for every under-replicated block not already being
    /// repaired. Stale pending copies (older than their deadline) are retried.
    pub fn repair_plan(&mut self, live: &BTreeSet<NodeId>, now: u64, timeout: u64) -> ReplicationPlan {
        for targets in self.pending.values_mut() {
            targets.retain(|n, deadline| *deadline > now && live.contains(n));
        }
        self.pending.retain(|_, t| !t.is_empty());
        let want = |m: &BlockMeta| (m.replication as usize).min(live.len());
        let plan = plan_repairs(
            self.blocks
                .iter()
                .filter(|(_, m)| m.holders.iter().filter(|n| live.contains(n)).count() < want(m))
                .map(|(b, m)| (*b, m)),
            live,
            &self.load(),
            &self.pending_targets(),
        );
        self.register(&plan, now + timeout);
        plan
    }

    /// Nodes that must not receive a new copy of each block: in-flight
    /// targets and nodes whose corrupt copy is still being deleted.
    fn pending_targets(&self) -> BTreeMap<BlockId, BTreeSet<NodeId>> {
        let mut out: BTreeMap<BlockId, BTreeSet<NodeId>> = self
            .pending
            .iter()
            .map(|(b, t)| (*b, t.keys().copied().collect()))
            .collect();
        for (b, n) in &self.condemned {
            out.entry(*b).or_default().insert(*n);
        }
        out
    }

    fn register(&mut self, plan: &ReplicationPlan, deadline: u64) {
        for mv in plan {
            self.pending
                .entry(mv.block)
                .or_default()
                .insert(mv.target, deadline);
        }
    }

    /// Blocks with fewer than `min(r, live)` live replicas.
    pub fn under_replicated(&self, live: &BTreeSet<NodeId>) -> Vec<BlockId> {
        self.blocks
            .iter()
            .filter(|(_, m)| {
                m.holders.iter().filter(|n| live.contains(n)).count()
                    < (m.replication as usize).min(live.len())
            })
            .map(|(b, _)| *b)
            .collect()
    }
}
