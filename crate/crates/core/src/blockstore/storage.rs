//! On-disk replica storage for one block node: `<id>.blk` holds the raw
//! bytes and `<id>.crc` the 4-byte big-endian CRC-32 of those bytes.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::namespace::BlockId;

pub fn crc32(data: &[u8]) -> u32 {
    crc32fast::hash(data)
}

/// A replica as read back from disk. The checksum is whatever was stored,
/// not recomputed, so callers can detect corruption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredBlock {
    pub id: BlockId,
    pub data: Vec<u8>,
    pub checksum: u32,
}

impl StoredBlock {
    pub fn is_intact(&self) -> bool {
        crc32(&self.data) == self.checksum
    }
}

#[derive(Debug, Clone)]
pub struct BlockStorage {
    dir: PathBuf,
}

impl BlockStorage {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(BlockStorage { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn data_path(&self, id: BlockId) -> PathBuf {
        self.dir.join(format!("{}.blk", id.0))
    }

    pub fn crc_path(&self, id: BlockId) -> PathBuf {
        self.dir.join(format!("{}.crc", id.0))
    }

    /// Writes data then checksum, each via a temporary file and rename.
    pub fn store(&self, id: BlockId, data: &[u8]) -> io::Result<()> {
        write_atomic(&self.data_path(id), data)?;
        write_atomic(&self.crc_path(id), &crc32(data).to_be_bytes())
    }

    pub fn load(&self, id: BlockId) -> io::Result<StoredBlock> {
        let data = fs::read(self.data_path(id))?;
        let crc = fs::read(self.crc_path(id))?;
        let checksum: [u8; 4] = crc
            .as_slice()
            .try_into()
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, "checksum file is not 4 bytes"))?;
        Ok(StoredBlock {
            id,
            data,
            checksum: u32::from_be_bytes(checksum),
        })
    }

    pub fn contains(&self, id: BlockId) -> bool {
        self.data_path(id).exists()
    }

    pub fn delete(&self, id: BlockId) -> io::Result<()> {
        for p in [self.data_path(id), self.crc_path(id)] {
            match fs::remove_file(&p) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    /// Every block with a data file in this directory.
    pub fn scan(&self) -> io::Result<BTreeSet<BlockId>> {
        let mut out = BTreeSet::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(id) = name.strip_suffix(".blk").and_then(|s| s.parse().ok()) {
                out.insert(BlockId(id));
            }
        }
        Ok(out)
    }
}

fn write_atomic(path: &Path, data: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, data)?;
    fs::rename(tmp, path)
}
