//! Replica placement and repair planning. Pure functions over the block map.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::namespace::BlockId;
use crate::fabric::NodeId;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockMeta {
    pub replication: u16,
    pub holders: BTreeSet<NodeId>,
}

/// Block id to the nodes holding a healthy replica.
pub type BlockLocations = BTreeMap<BlockId, BlockMeta>;

/// Copy `block` from `source` (which holds it) to `target` (which does not).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicationMove {
    pub block: BlockId,
    pub source: NodeId,
    pub target: NodeId,
}

pub type ReplicationPlan = Vec<ReplicationMove>;

/// Picks up to `count` distinct write targets from `live`. The writer's
/// co-located node goes first when it is live; the rest are drawn at random.
pub fn choose_targets<R: Rng>(
    count: usize,
    live: &BTreeSet<NodeId>,
    local: Option<NodeId>,
    rng: &mut R,
) -> Vec<NodeId> {
    let mut out = Vec::with_capacity(count);
    if let Some(l) = local.filter(|l| live.contains(l)) {
        out.push(l);
    }
    let mut rest: Vec<NodeId> = live.iter().copied().filter(|n| Some(*n) != local).collect();
    rest.shuffle(rng);
    out.extend(rest);
    out.truncate(count);
    out
}

/// Plans copies so every listed block reaches `min(replication, live)`
/// replicas. Targets are the least loaded live nodes not already holding the
/// block (ties by lowest id); sources are live holders, spreading reads.
/// `pending` counts copies already in flight per block.
pub fn plan_repairs<'a>(
    blocks: impl IntoIterator<Item = (BlockId, &'a BlockMeta)>,
    live: &BTreeSet<NodeId>,
    load: &BTreeMap<NodeId, usize>,
    pending: &BTreeMap<BlockId, BTreeSet<NodeId>>,
) -> ReplicationPlan {
    let mut load: BTreeMap<NodeId, usize> = live
        .iter()
        .map(|n| (*n, load.get(n).copied().unwrap_or(0)))
        .collect();
    let mut source_use: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut plan = Vec::new();
    for (block, meta) in blocks {
        let in_flight = pending.get(&block);
        let mut have: BTreeSet<NodeId> = meta
            .holders
            .iter()
            .copied()
            .filter(|n| live.contains(n))
            .collect();
        let sources: Vec<NodeId> = have.iter().copied().collect();
        if sources.is_empty() {
            continue;
        }
        if let Some(p) = in_flight {
            have.extend(p.iter().copied());
        }
        let want = (meta.replication as usize).min(live.len());
        while have.len() < want {
            let Some(target) = load
                .iter()
                .filter(|(n, _)| !have.contains(n))
                .min_by_key(|(n, l)| (**l, **n))
                .map(|(n, _)| *n)
            else {
                break;
            };
            let source = *sources
                .iter()
                .min_by_key(|s| (source_use.get(s).copied().unwrap_or(0), **s))
                .expect("nonempty");
            *source_use.entry(source).or_default() += 1;
            *load.get_mut(&target).expect("live") += 1;
            have.insert(target);
            plan.push(ReplicationMove {
                block,
                source,
                target,
            });
        }
    }
    plan
}
