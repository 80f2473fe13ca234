//! Filesystem client. Metadata calls go to the namespace master; block data
//! moves between nodes over the fabric's synchronous data path.

use std::collections::{BTreeMap, BTreeSet};

use super::master::NamespaceMaster;
use super::namespace::{BlockId, FileEntry};
use super::perm::{Mode, Principal};
use super::placement::choose_targets;
use super::storage::BlockStorage;
use super::DfsError;
use crate::fabric::{Fabric, Message, MessageKind, NodeId, Role};

/// Block node daemon state. Replicas live on disk; the struct is a handle.
#[derive(Debug, Clone)]
pub struct BlockNode {
    pub id: NodeId,
    pub storage: BlockStorage,
}

pub(crate) fn block_payload(id: BlockId, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + data.len());
    out.extend_from_slice(&id.0.to_be_bytes());
    out.extend_from_slice(data);
    out
}

pub(crate) fn parse_block_payload(payload: &[u8]) -> Option<(BlockId, &[u8])> {
    let head: [u8; 8] = payload.get(..8)?.try_into().ok()?;
    Some((BlockId(u64::from_be_bytes(head)), &payload[8..]))
}

/// Live block nodes according to the membership view.
pub fn live_block_nodes(fabric: &Fabric) -> BTreeSet<NodeId> {
    fabric
        .nodes()
        .filter(|n| n.role == Role::BlockNode && n.is_alive())
        .map(|n| n.id)
        .collect()
}

/// The block node sharing a host with `node`, if any.
pub fn colocated_block_node(fabric: &Fabric, node: NodeId) -> Option<NodeId> {
    let host = fabric.node(node)?.host;
    fabric
        .nodes()
        .find(|n| n.role == Role::BlockNode && n.host == host && n.id != node)
        .map(|n| n.id)
        .or_else(|| {
            fabric
                .node(node)
                .filter(|n| n.role == Role::BlockNode)
                .map(|n| n.id)
        })
}

pub struct DfsClient<'a> {
    fabric: &'a mut Fabric,
    master: &'a mut NamespaceMaster,
    nodes: &'a BTreeMap<NodeId, BlockNode>,
    local: NodeId,
    principal: Principal,
}

impl<'a> DfsClient<'a> {
    pub fn new(
        fabric: &'a mut Fabric,
        master: &'a mut NamespaceMaster,
        nodes: &'a BTreeMap<NodeId, BlockNode>,
        local: NodeId,
        principal: Principal,
    ) -> Self {
        DfsClient {
            fabric,
            master,
            nodes,
            local,
            principal,
        }
    }

    pub fn principal(&self) -> &Principal {
        &self.principal
    }

    pub fn block_size(&self) -> u64 {
        self.master.block_size()
    }

    fn meta(&mut self, op: &str, path: &str) -> Result<(), DfsError> {
        let msg = Message::new(
            self.local,
            self.master.node(),
            MessageKind::MetadataCall,
            format!("{op} {path}").into_bytes(),
        );
        if self.fabric.transfer(msg)?.reaches_destination() {
            Ok(())
        } else {
            Err(DfsError::MasterUnreachable)
        }
    }

    pub fn stat(&mut self, path: &str) -> Result<FileEntry, DfsError> {
        self.meta("stat", path)?;
        self.master
            .namespace()
            .lookup(path, &self.principal)
            .cloned()
    }

    pub fn exists(&mut self, path: &str) -> Result<bool, DfsError> {
        self.meta("exists", path)?;
        Ok(self.master.namespace().exists(path))
    }

    pub fn mkdirs(&mut self, path: &str, mode: Mode) -> Result<(), DfsError> {
        self.meta("mkdirs", path)?;
        self.master
            .namespace_mut()
            .mkdirs(path, &self.principal, mode)
    }

    pub fn create_file(&mut self, path: &str, mode: Mode, replication: u16) -> Result<FileEntry, DfsError> {
        self.meta("create", path)?;
        let e = self
            .master
            .namespace_mut()
            .create_file(path, &self.principal, mode, replication)?;
        self.fabric.record(format_args!(
            "create {} owner={} mode={} r={}",
            e.path,
            e.owner,
            e.mode.octal(),
            e.replication
        ));
        Ok(e)
    }

    pub fn chmod(&mut self, path: &str, mode: Mode) -> Result<FileEntry, DfsError> {
        self.meta("chmod", path)?;
        self.master
            .namespace_mut()
            .chmod(path, mode, &self.principal)
    }

    pub fn ls(&mut self, path: &str) -> Result<Vec<FileEntry>, DfsError> {
        self.meta("ls", path)?;
        self.master.namespace().ls(path, &self.principal)
    }

    /// Regular files directly under `path`, or `path` itself if it is a file.
    pub fn files_in(&mut self, path: &str) -> Result<Vec<FileEntry>, DfsError> {
        self.meta("list", path)?;
        self.master.namespace().files_in(path, &self.principal)
    }

    pub fn rename(&mut self, from: &str, to: &str) -> Result<(), DfsError> {
        self.meta("rename", from)?;
        self.master
            .namespace_mut()
            .rename(from, to, &self.principal)
    }

    /// Removes a path (recursively) and schedules replica deletion.
    pub fn delete(&mut self, path: &str) -> Result<usize, DfsError> {
        self.meta("delete", path)?;
        let removed = self
            .master
            .namespace_mut()
            .remove(path, &self.principal)?;
        let deletions = self.master.forget(&removed);
        self.send_deletions(&deletions);
        self.fabric
            .record(format_args!("delete {path} entries={}", removed.len()));
        Ok(removed.len())
    }

    fn send_deletions(&mut self, deletions: &[(NodeId, BlockId)]) {
        let from = self.master.node();
        for (node, block) in deletions {
            let msg = Message::new(from, *node, MessageKind::DeleteBlock, block.0.to_be_bytes().to_vec());
            // best effort: unreachable replicas are cleaned up by block reports
            let _ = self.fabric.send(msg);
        }
    }

    /// Creates the file and writes `data` to it in one go.
    pub fn put(&mut self, path: &str, data: &[u8], mode: Mode, replication: u16) -> Result<Vec<BlockId>, DfsError> {
        self.create_file(path, mode, replication)?;
        match self.write(path, data) {
            Ok(ids) => Ok(ids),
            Err(e) => {
                let _ = self.delete(path);
                Err(e)
            }
        }
    }

    /// Splits `data` into blocks and pipelines each block to
    /// `min(r, live block nodes)` distinct nodes. The namespace is updated
    /// only after every pipeline finished.
    pub fn write(&mut self, path: &str, data: &[u8]) -> Result<Vec<BlockId>, DfsError> {
        self.meta("write", path)?;
        let entry = self
            .master
            .namespace()
            .check_writable(path, &self.principal)?
            .clone();
        let bs = self.block_size() as usize;
        let live = live_block_nodes(self.fabric);
        if live.is_empty() && !data.is_empty() {
            return Err(DfsError::NoLiveNodes);
        }
        let want = (entry.replication as usize).min(live.len());
        let local = colocated_block_node(self.fabric, self.local);
        let mut placed: Vec<(BlockId, BTreeSet<NodeId>)> = Vec::new();
        for chunk in data.chunks(bs) {
            let id = self.master.namespace_mut().allocate_block();
            let order = choose_targets(live.len(), &live, local, self.fabric.rng());
            let stored = self.pipeline(id, chunk, &order, want)?;
            if stored.is_empty() {
                let undo: Vec<(NodeId, BlockId)> = placed
                    .iter()
                    .flat_map(|(b, ns)| ns.iter().map(move |n| (*n, *b)))
                    .collect();
                self.send_deletions(&undo);
                return Err(DfsError::NoLiveNodes);
            }
            placed.push((id, stored));
        }
        let ids: Vec<BlockId> = placed.iter().map(|(b, _)| *b).collect();
        self.master
            .commit_file(&entry.path, placed, data.len() as u64)?;
        self.fabric.record(format_args!(
            "commit {} blocks={} length={}",
            entry.path,
            ids.len(),
            data.len()
        ));
        Ok(ids)
    }

    fn pipeline(
        &mut self,
        id: BlockId,
        chunk: &[u8],
        order: &[NodeId],
        want: usize,
    ) -> Result<BTreeSet<NodeId>, DfsError> {
        let mut stored = BTreeSet::new();
        let mut prev = self.local;
        for target in order {
            if stored.len() == want {
                break;
            }
            let msg = Message::new(prev, *target, MessageKind::WriteBlock, block_payload(id, chunk));
            if !self.fabric.transfer(msg)?.reaches_destination() {
                continue;
            }
            let Some(node) = self.nodes.get(target) else {
                continue;
            };
            if let Err(e) = node.storage.store(id, chunk) {
                self.fabric
                    .record(format_args!("store-failed {target} block={id} {e}"));
                continue;
            }
            stored.insert(*target);
            prev = *target;
        }
        Ok(stored)
    }

    /// Reads a whole file, verifying every block's checksum.
    pub fn read(&mut self, path: &str) -> Result<Vec<u8>, DfsError> {
        self.meta("read", path)?;
        let entry = self
            .master
            .namespace()
            .check_readable(path, &self.principal)?
            .clone();
        let mut out = Vec::with_capacity(entry.length as usize);
        for b in &entry.blocks {
            out.extend(self.fetch_block(*b)?);
        }
        Ok(out)
    }

    /// Reads block `index` of a file the caller may read.
    pub fn read_block(&mut self, path: &str, index: usize) -> Result<Vec<u8>, DfsError> {
        self.meta("read", path)?;
        let entry = self
            .master
            .namespace()
            .check_readable(path, &self.principal)?;
        let block = *entry
            .blocks
            .get(index)
            .ok_or_else(|| DfsError::NotFound(format!("{path}#block{index}")))?;
        self.fetch_block(block)
    }

    /// Tries replicas co-located first, then by node id. A replica whose
    /// checksum does not match is reported corrupt and the next is tried.
    pub fn fetch_block(&mut self, block: BlockId) -> Result<Vec<u8>, DfsError> {
        let local = colocated_block_node(self.fabric, self.local);
        let mut holders: Vec<NodeId> = self.master.holders(block).into_iter().collect();
        holders.sort_by_key(|n| (Some(*n) != local, *n));
        let mut corrupt = 0;
        for h in &holders {
            let req = Message::new(self.local, *h, MessageKind::ReadBlock, block.0.to_be_bytes().to_vec());
            if !self.fabric.transfer(req)?.reaches_destination() {
                continue;
            }
            let Some(node) = self.nodes.get(h) else {
                continue;
            };
            let replica = match node.storage.load(block) {
                Ok(r) => r,
                Err(e) => {
                    self.fabric
                        .record(format_args!("replica-missing {h} block={block} {e}"));
                    self.master.mark_corrupt(block, *h);
                    corrupt += 1;
                    continue;
                }
            };
            let mut payload = block_payload(block, &[]);
            payload.extend_from_slice(&replica.checksum.to_be_bytes());
            payload.extend_from_slice(&replica.data);
            let reply = Message::new(*h, self.local, MessageKind::BlockContent, payload);
            if !self.fabric.transfer(reply)?.reaches_destination() {
                continue;
            }
            if !replica.is_intact() {
                self.fabric
                    .record(format_args!("checksum-mismatch {h} block={block}"));
                self.master.mark_corrupt(block, *h);
                corrupt += 1;
                continue;
            }
            return Ok(replica.data);
        }
        if corrupt > 0 && corrupt == holders.len() {
            Err(DfsError::AllReplicasCorrupt(block))
        } else {
            Err(DfsError::BlockUnavailable(block))
        }
    }
}
