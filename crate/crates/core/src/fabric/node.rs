use std::fmt;

use serde::{Deserialize, Serialize};

/// Cluster-unique node identifier. Never reused within one cluster instance.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The five daemon roles that make up a cluster.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Role {
    NamespaceMaster,
    BlockNode,
    CheckpointNode,
    JobMaster,
    TaskRunner,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::NamespaceMaster,
        Role::BlockNode,
        Role::CheckpointNode,
        Role::JobMaster,
        Role::TaskRunner,
    ];

    /// Daemon name as printed by `status`.
    pub fn daemon_name(self) -> &'static str {
        match self {
            Role::NamespaceMaster => "NamespaceMaster",
            Role::BlockNode => "BlockNode",
            Role::CheckpointNode => "CheckpointNode",
            Role::JobMaster => "JobMaster",
            Role::TaskRunner => "TaskRunner",
        }
    }

    /// Masters run the failure detector and are not themselves monitored.
    pub fn is_master(self) -> bool {
        matches!(self, Role::NamespaceMaster | Role::JobMaster)
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.daemon_name())
    }
}

/// Membership view of a node. Only ever moves from `Alive` to `Dead`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeState {
    Alive,
    Dead,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeInfo {
    pub id: NodeId,
    pub role: Role,
    /// Physical host. Worker `i` runs BlockNode `i` and TaskRunner `i` on the
    /// same host, which is what map-task locality keys on.
    pub host: u32,
    pub state: NodeState,
    pub last_heartbeat: u64,
    pub daemon_id: u32,
}

impl NodeInfo {
    pub fn is_alive(&self) -> bool {
        self.state == NodeState::Alive
    }
}
