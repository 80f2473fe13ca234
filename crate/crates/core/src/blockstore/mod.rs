//! Replicated block filesystem: namespace master, block nodes, checkpoints
//! and the client that ties them together over the fabric.

mod checkpoint;
mod client;
mod image;
mod master;
mod namespace;
mod perm;
mod placement;
mod storage;

pub use checkpoint::{checkpoint_path, latest_checkpoint, load_checkpoint, write_checkpoint};
pub use client::{colocated_block_node, live_block_nodes, BlockNode, DfsClient};
pub use image::{decode_image, encode_image};
pub use master::{NamespaceMaster, ReplicaVerdict};
pub use namespace::{normalize, parent, BlockId, EntryKind, FileEntry, Namespace, DEFAULT_DIR_MODE, ROOT};
pub use perm::{check_access, select_class, Access, Action, Class, Mode, Principal};
pub use placement::{choose_targets, plan_repairs, BlockLocations, BlockMeta, ReplicationMove, ReplicationPlan};
pub use storage::{crc32, BlockStorage, StoredBlock};

pub(crate) use client::{block_payload, parse_block_payload};

use crate::fabric::FabricError;

#[derive(Debug, thiserror::Error)]
pub enum DfsError {
    #[error("{0}: no such file or directory")]
    NotFound(String),
    #[error("{0}: already exists")]
    AlreadyExists(String),
    #[error("{path}: permission denied ({action})")]
    PermissionDenied { path: String, action: Action },
    #[error("{0}: not a directory")]
    NotADirectory(String),
    #[error("{0}: is a directory")]
    IsADirectory(String),
    #[error("{0}: invalid path")]
    InvalidPath(String),
    #[error("{0}: invalid name")]
    InvalidName(String),
    #[error("replication must be at least 1")]
    InvalidReplication,
    #[error("{0}: file already written")]
    AlreadyWritten(String),
    #[error("no live block nodes")]
    NoLiveNodes,
    #[error("all replicas of block {0} are corrupt")]
    AllReplicasCorrupt(BlockId),
    #[error("no reachable replica of block {0}")]
    BlockUnavailable(BlockId),
    #[error("namespace master unreachable")]
    MasterUnreachable,
    #[error("corrupt namespace image: {0}")]
    CorruptImage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Fabric(#[from] FabricError),
}
