//! Periodic namespace snapshots written by the checkpoint node.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use super::image::{decode_image, encode_image};
use super::namespace::Namespace;
use super::DfsError;

const PREFIX: &str = "fsimage-";

pub fn checkpoint_path(dir: &Path, seq: u64) -> PathBuf {
    dir.join(format!("{PREFIX}{seq:06}"))
}

/// Writes checkpoint `seq` atomically.
pub fn write_checkpoint(dir: &Path, seq: u64, ns: &Namespace) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = checkpoint_path(dir, seq);
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode_image(ns))?;
    fs::rename(&tmp, &path)?;
    Ok(path)
}

/// Highest checkpoint sequence number present in `dir`.
pub fn latest_checkpoint(dir: &Path) -> io::Result<Option<u64>> {
    if !dir.exists() {
        return Ok(None);
    }
    let mut best = None;
    for entry in fs::read_dir(dir)? {
        let name = entry?.file_name();
        let Some(seq) = name
            .to_str()
            .and_then(|n| n.strip_prefix(PREFIX))
            .and_then(|n| n.parse::<u64>().ok())
        else {
            continue;
        };
        best = best.max(Some(seq));
    }
    Ok(best)
}

pub fn load_checkpoint(dir: &Path, seq: u64) -> Result<Namespace, DfsError> {
    let text = fs::read_to_string(checkpoint_path(dir, seq))?;
    decode_image(&text)
}
