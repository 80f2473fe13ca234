//! The namespace master's metadata: a tree of directories and files keyed by
//! absolute path, with ownership, modes and block lists.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::perm::{check_access, Action, Mode, Principal};
use super::DfsError;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct BlockId(pub u64);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntryKind {
    File,
    Directory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub kind: EntryKind,
    pub owner: String,
    pub group: String,
    pub mode: Mode,
    /// Target replica count; 0 for directories.
    pub replication: u16,
    pub blocks: Vec<BlockId>,
    pub length: u64,
}

impl FileEntry {
    pub fn is_dir(&self) -> bool {
        self.kind == EntryKind::Directory
    }

    pub fn allows(&self, principal: &Principal, action: Action) -> bool {
        check_access(&self.owner, &self.group, self.mode, principal, action).is_allowed()
    }

    /// Length of block `index`; every block but the last is full.
    pub fn block_len(&self, index: usize, block_size: u64) -> u64 {
        let start = index as u64 * block_size;
        block_size.min(self.length.saturating_sub(start))
    }

    /// Final path component (`"/"` for the root).
    pub fn name(&self) -> &str {
        if self.path == "/" {
            "/"
        } else {
            self.path.rsplit('/').next().unwrap_or("")
        }
    }
}

pub const ROOT: &str = "/";

/// Default mode for directories created implicitly by a write.
pub const DEFAULT_DIR_MODE: Mode = Mode::new(0o750);

/// Validates and normalizes an absolute slash-separated path.
pub fn normalize(path: &str) -> Result<String, DfsError> {
    let bad = || DfsError::InvalidPath(path.to_string());
    if !path.starts_with('/') || path.chars().any(|c| c.is_control()) {
        return Err(bad());
    }
    let mut out = String::new();
    for comp in path.split('/').filter(|c| !c.is_empty()) {
        if comp == "." || comp == ".." {
            return Err(bad());
        }
        out.push('/');
        out.push_str(comp);
    }
    if out.is_empty() {
        out.push('/');
    }
    Ok(out)
}

pub fn parent(path: &str) -> Option<&str> {
    if path == ROOT {
        return None;
    }
    match path.rfind('/') {
        Some(0) => Some(ROOT),
        Some(i) => Some(&path[..i]),
        None => None,
    }
}

fn is_under(path: &str, dir: &str) -> bool {
    if dir == ROOT {
        return path != ROOT;
    }
    path.len() > dir.len() && path.starts_with(dir) && path.as_bytes()[dir.len()] == b'/'
}

fn check_name(name: &str) -> Result<(), DfsError> {
    if name.is_empty() || name.chars().any(|c| c.is_control() || c == ',') {
        return Err(DfsError::InvalidName(name.to_string()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Namespace {
    pub namespace_id: u64,
    pub block_size: u64,
    pub next_block_id: u64,
    entries: BTreeMap<String, FileEntry>,
}

impl Namespace {
    /// An empty namespace holding only the root directory, owned by
    /// `hduser:hadoop` with mode 755, and world-writable `/tmp` plus `/user`.
    pub fn fresh(namespace_id: u64, block_size: u64) -> Self {
        let mut ns = Namespace {
            namespace_id,
            block_size,
            next_block_id: 1,
            entries: BTreeMap::new(),
        };
        for (path, mode) in [("/", 0o755), ("/tmp", 0o777), ("/user", 0o755)] {
            ns.entries.insert(
                path.to_string(),
                FileEntry {
                    path: path.to_string(),
                    kind: EntryKind::Directory,
                    owner: "hduser".into(),
                    group: "hadoop".into(),
                    mode: Mode::new(mode),
                    replication: 0,
                    blocks: Vec::new(),
                    length: 0,
                },
            );
        }
        ns
    }

    pub(crate) fn from_parts(
        namespace_id: u64,
        block_size: u64,
        next_block_id: u64,
        entries: impl IntoIterator<Item = FileEntry>,
    ) -> Self {
        Namespace {
            namespace_id,
            block_size,
            next_block_id,
            entries: entries.into_iter().map(|e| (e.path.clone(), e)).collect(),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &FileEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of regular files.
    pub fn file_count(&self) -> usize {
        self.entries.values().filter(|e| !e.is_dir()).count()
    }

    pub fn stat(&self, path: &str) -> Option<&FileEntry> {
        self.entries.get(path)
    }

    pub fn exists(&self, path: &str) -> bool {
        normalize(path).is_ok_and(|p| self.entries.contains_key(&p))
    }

    pub fn allocate_block(&mut self) -> BlockId {
        let id = BlockId(self.next_block_id);
        self.next_block_id += 1;
        id
    }

    /// Requires execute on every existing ancestor directory of `path`.
    fn traverse(&self, path: &str, who: &Principal) -> Result<(), DfsError> {
        let mut chain = Vec::new();
        let mut cur = parent(path);
        while let Some(p) = cur {
            chain.push(p);
            cur = parent(p);
        }
        for dir in chain.into_iter().rev() {
            let Some(entry) = self.entries.get(dir) else {
                return Err(DfsError::NotFound(dir.to_string()));
            };
            if !entry.is_dir() {
                return Err(DfsError::NotADirectory(dir.to_string()));
            }
            if !entry.allows(who, Action::Execute) {
                return Err(DfsError::PermissionDenied {
                    path: dir.to_string(),
                    action: Action::Execute,
                });
            }
        }
        Ok(())
    }

    fn require(&self, entry: &FileEntry, who: &Principal, action: Action) -> Result<(), DfsError> {
        if entry.allows(who, action) {
            Ok(())
        } else {
            Err(DfsError::PermissionDenied {
                path: entry.path.clone(),
                action,
            })
        }
    }

    /// Looks up an existing entry, checking traversal of its ancestors.
    pub fn lookup(&self, path: &str, who: &Principal) -> Result<&FileEntry, DfsError> {
        let path = normalize(path)?;
        self.traverse(&path, who)?;
        self.entries
            .get(&path)
            .ok_or(DfsError::NotFound(path))
    }

    /// Creating a child needs execute on all ancestors and write on the parent.
    fn check_create_in(&self, path: &str, who: &Principal) -> Result<&FileEntry, DfsError> {
        let parent_path = parent(path).ok_or_else(|| DfsError::AlreadyExists(path.into()))?;
        self.traverse(path, who)?;
        let parent = self
            .entries
            .get(parent_path)
            .ok_or_else(|| DfsError::NotFound(parent_path.into()))?;
        self.require(parent, who, Action::Write)?;
        Ok(parent)
    }

    fn insert_child(
        &mut self,
        path: &str,
        kind: EntryKind,
        who: &Principal,
        mode: Mode,
        replication: u16,
    ) -> Result<FileEntry, DfsError> {
        check_name(&who.user)?;
        let group = self.check_create_in(path, who)?.group.clone();
        let entry = FileEntry {
            path: path.to_string(),
            kind,
            owner: who.user.clone(),
            group,
            mode,
            replication,
            blocks: Vec::new(),
            length: 0,
        };
        self.entries.insert(path.to_string(), entry.clone());
        Ok(entry)
    }

    /// Creates `path` and any missing ancestors. Existing directories are
    /// left untouched.
    pub fn mkdirs(&mut self, path: &str, who: &Principal, mode: Mode) -> Result<(), DfsError> {
        let path = normalize(path)?;
        let mut prefix = String::new();
        for comp in path.split('/').filter(|c| !c.is_empty()) {
            prefix.push('/');
            prefix.push_str(comp);
            match self.entries.get(&prefix) {
                Some(e) if e.is_dir() => {}
                Some(_) => return Err(DfsError::NotADirectory(prefix)),
                None => {
                    check_name(comp)?;
                    self.insert_child(&prefix, EntryKind::Directory, who, mode, 0)?;
                }
            }
        }
        Ok(())
    }

    /// Creates an empty file owned by `who`. Missing parent directories are
    /// created with [`DEFAULT_DIR_MODE`].
    pub fn create_file(
        &mut self,
        path: &str,
        who: &Principal,
        mode: Mode,
        replication: u16,
    ) -> Result<FileEntry, DfsError> {
        let path = normalize(path)?;
        if replication == 0 {
            return Err(DfsError::InvalidReplication);
        }
        if self.entries.contains_key(&path) {
            return Err(DfsError::AlreadyExists(path));
        }
        if let Some(dir) = parent(&path) {
            self.mkdirs(dir, who, DEFAULT_DIR_MODE)?;
        }
        check_name(path.rsplit('/').next().unwrap_or(""))?;
        self.insert_child(&path, EntryKind::File, who, mode, replication)
    }

    /// Checks that `who` may write the (still empty) file at `path`.
    pub fn check_writable(&self, path: &str, who: &Principal) -> Result<&FileEntry, DfsError> {
        let entry = self.lookup(path, who)?;
        if entry.is_dir() {
            return Err(DfsError::IsADirectory(entry.path.clone()));
        }
        self.require(entry, who, Action::Write)?;
        if entry.length > 0 || !entry.blocks.is_empty() {
            return Err(DfsError::AlreadyWritten(entry.path.clone()));
        }
        Ok(entry)
    }

    pub fn check_readable(&self, path: &str, who: &Principal) -> Result<&FileEntry, DfsError> {
        let entry = self.lookup(path, who)?;
        if entry.is_dir() {
            return Err(DfsError::IsADirectory(entry.path.clone()));
        }
        self.require(entry, who, Action::Read)?;
        Ok(entry)
    }

    /// Publishes a completed write. Only called after every block's pipeline
    /// finished, so readers never see partial files.
    pub fn commit_blocks(&mut self, path: &str, blocks: Vec<BlockId>, length: u64) -> Result<(), DfsError> {
        let entry = self
            .entries
            .get_mut(path)
            .ok_or_else(|| DfsError::NotFound(path.into()))?;
        entry.blocks = blocks;
        entry.length = length;
        Ok(())
    }

    /// Replaces the mode. Owner only.
    pub fn chmod(&mut self, path: &str, mode: Mode, who: &Principal) -> Result<FileEntry, DfsError> {
        let path = self.lookup(path, who)?.path.clone();
        let entry = self.entries.get_mut(&path).expect("looked up");
        if entry.owner != who.user {
            return Err(DfsError::PermissionDenied {
                path,
                action: Action::Write,
            });
        }
        entry.mode = mode;
        Ok(entry.clone())
    }

    /// Direct children of a directory, in path order.
    pub fn children(&self, dir: &str) -> Vec<&FileEntry> {
        self.entries
            .values()
            .filter(|e| parent(&e.path) == Some(dir) && e.path != dir)
            .collect()
    }

    /// Lists a directory (read permission on it) or a single file (read
    /// permission on the file).
    pub fn ls(&self, path: &str, who: &Principal) -> Result<Vec<FileEntry>, DfsError> {
        let entry = self.lookup(path, who)?;
        self.require(entry, who, Action::Read)?;
        if entry.is_dir() {
            Ok(self.children(&entry.path).into_iter().cloned().collect())
        } else {
            Ok(vec![entry.clone()])
        }
    }

    /// Removes an entry and everything under it. Needs write on the parent.
    /// Returns the removed entries.
    pub fn remove(&mut self, path: &str, who: &Principal) -> Result<Vec<FileEntry>, DfsError> {
        let path = self.lookup(path, who)?.path.clone();
        if path == ROOT {
            return Err(DfsError::PermissionDenied {
                path,
                action: Action::Write,
            });
        }
        self.check_create_in(&path, who)?;
        let doomed: Vec<String> = self
            .entries
            .keys()
            .filter(|k| **k == path || is_under(k, &path))
            .cloned()
            .collect();
        Ok(doomed
            .into_iter()
            .filter_map(|k| self.entries.remove(&k))
            .collect())
    }

    /// Moves an entry (and its subtree) to a new absent path.
    pub fn rename(&mut self, from: &str, to: &str, who: &Principal) -> Result<(), DfsError> {
        let from = self.lookup(from, who)?.path.clone();
        let to = normalize(to)?;
        if self.entries.contains_key(&to) {
            return Err(DfsError::AlreadyExists(to));
        }
        if is_under(&to, &from) || from == ROOT {
            return Err(DfsError::InvalidPath(to));
        }
        self.check_create_in(&from, who)?;
        if let Some(dir) = parent(&to) {
            self.mkdirs(dir, who, DEFAULT_DIR_MODE)?;
        }
        self.check_create_in(&to, who)?;
        let moving: Vec<String> = self
            .entries
            .keys()
            .filter(|k| **k == from || is_under(k, &from))
            .cloned()
            .collect();
        for old in moving {
            let mut entry = self.entries.remove(&old).expect("listed");
            entry.path = format!("{to}{}", &old[from.len()..]);
            self.entries.insert(entry.path.clone(), entry);
        }
        Ok(())
    }

    /// Files under `dir` (one level) or `dir` itself when it is a file.
    pub fn files_in(&self, path: &str, who: &Principal) -> Result<Vec<FileEntry>, DfsError> {
        let entry = self.lookup(path, who)?;
        if !entry.is_dir() {
            return Ok(vec![entry.clone()]);
        }
        Ok(self
            .children(&entry.path)
            .into_iter()
            .filter(|e| !e.is_dir())
            .cloned()
            .collect())
    }
}
