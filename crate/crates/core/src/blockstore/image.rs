//! Line-oriented namespace image.
//!
//! ```text
//! namespace<TAB><namespaceId><TAB><nextBlockId><TAB><blockSize>
//! <path><TAB><owner><TAB><group><TAB><octal mode><TAB><replication><TAB><length><TAB><block ids, comma separated>
//! ```
//!
//! Directory paths carry a trailing `/` (the root is just `/`).

use std::fmt::Write as _;

use super::namespace::{BlockId, EntryKind, FileEntry, Namespace};
use super::DfsError;

const HEADER: &str = "namespace";

pub fn encode_image(ns: &Namespace) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{HEADER}\t{}\t{}\t{}",
        ns.namespace_id, ns.next_block_id, ns.block_size
    );
    for e in ns.entries() {
        let path = if e.is_dir() && e.path != "/" {
            format!("{}/", e.path)
        } else {
            e.path.clone()
        };
        let blocks = e
            .blocks
            .iter()
            .map(|b| b.0.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            out,
            "{path}\t{}\t{}\t{}\t{}\t{}\t{blocks}",
            e.owner,
            e.group,
            e.mode.octal(),
            e.replication,
            e.length
        );
    }
    out
}

pub fn decode_image(text: &str) -> Result<Namespace, DfsError> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, why: &str| DfsError::CorruptImage(format!("line {}: {why}", line + 1));
    let (_, header) = lines.next().ok_or_else(|| bad(0, "empty image"))?;
    let h: Vec<&str> = header.split('\t').collect();
    if h.len() != 4 || h[0] != HEADER {
        return Err(bad(0, "bad header"));
    }
    let num = |s: &str, line: usize| s.parse::<u64>().map_err(|_| bad(line, "bad number"));
    let namespace_id = num(h[1], 0)?;
    let next_block_id = num(h[2], 0)?;
    let block_size = num(h[3], 0)?;
    let mut entries = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 7 {
            return Err(bad(i, "expected 7 fields"));
        }
        let (path, kind) = if f[0] == "/" {
            ("/".to_string(), EntryKind::Directory)
        } else if let Some(p) = f[0].strip_suffix('/') {
            (p.to_string(), EntryKind::Directory)
        } else {
            (f[0].to_string(), EntryKind::File)
        };
        let blocks = if f[6].is_empty() {
            Vec::new()
        } else {
            f[6].split(',')
                .map(|b| num(b, i).map(BlockId))
                .collect::<Result<_, _>>()?
        };
        entries.push(FileEntry {
            path,
            kind,
            owner: f[1].to_string(),
            group: f[2].to_string(),
            mode: f[3].parse().map_err(|_| bad(i, "bad mode"))?,
            replication: f[4].parse().map_err(|_| bad(i, "bad replication"))?,
            length: num(f[5], i)?,
            blocks,
        });
    }
    Ok(Namespace::from_parts(namespace_id, block_size, next_block_id, entries))
}
