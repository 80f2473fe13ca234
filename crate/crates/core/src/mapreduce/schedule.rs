use std::collections::{BTreeMap, BTreeSet};

use super::{TaskId, TaskKind};
use crate::fabric::NodeId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingTask {
    pub task: TaskId,
    /// Runners co-located with a replica of the task's input.
    pub preferred: BTreeSet<NodeId>,
}

/// Assigns pending tasks, in the order given, to runners with free slots.
/// A map goes to the lowest-id preferred runner with a free slot, else to
/// the lowest-id runner with one. Reduces are held back until
/// `maps_complete`.
pub fn schedule(
    pending: &[PendingTask],
    free_slots: &BTreeMap<NodeId, usize>,
    maps_complete: bool,
) -> Vec<(TaskId, NodeId)> {
    let mut free = free_slots.clone();
    free.retain(|_, n| *n > 0);
    let mut out = Vec::new();
    for p in pending {
        if free.is_empty() {
            break;
        }
        if p.task.kind == TaskKind::Reduce && !maps_complete {
            continue;
        }
        let local = p.preferred.iter().find(|n| free.contains_key(n)).copied();
        let node = local.unwrap_or_else(|| *free.keys().next().expect("non-empty"));
        out.push((p.task.clone(), node));
        let slots = free.get_mut(&node).expect("present");
        *slots -= 1;
        if *slots == 0 {
            free.remove(&node);
        }
    }
    out
}
