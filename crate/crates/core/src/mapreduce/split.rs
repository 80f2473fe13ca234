use serde::{Deserialize, Serialize};

use crate::blockstore::{BlockId, DfsClient, DfsError};

/// One map task's input: a single stored block of a file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSplit {
    pub path: String,
    pub block_index: usize,
    pub block: BlockId,
    pub offset: u64,
    pub length: u64,
    /// Blocks in the file, so a record can be followed past the split end.
    pub file_blocks: usize,
}

/// One split per stored block, files in the order given (directories expand
/// to their files in name order).
pub fn compute_splits(client: &mut DfsClient<'_>, input_paths: &[String]) -> Result<Vec<InputSplit>, DfsError> {
    let bs = client.block_size();
    let mut out = Vec::new();
    for p in input_paths {
        for f in client.files_in(p)? {
            for (i, b) in f.blocks.iter().enumerate() {
                out.push(InputSplit {
                    path: f.path.clone(),
                    block_index: i,
                    block: *b,
                    offset: i as u64 * bs,
                    length: f.block_len(i, bs),
                    file_blocks: f.blocks.len(),
                });
            }
        }
    }
    Ok(out)
}

/// Newline-delimited records owned by `split`: those whose first byte lies
/// inside it. The last record is completed from following blocks.
pub fn split_records<F>(split: &InputSplit, mut fetch: F) -> Result<Vec<Vec<u8>>, DfsError>
where
    F: FnMut(usize) -> Result<Vec<u8>, DfsError>,
{
    let data = fetch(split.block_index)?;
    let mut start = 0;
    if split.block_index > 0 {
        let prev = fetch(split.block_index - 1)?;
        if prev.last() != Some(&b'\n') {
            match data.iter().position(|&b| b == b'\n') {
                Some(nl) => start = nl + 1,
                None => return Ok(Vec::new()),
            }
        }
    }
    let mut records: Vec<Vec<u8>> = Vec::new();
    let mut rest = &data[start..];
    while let Some(nl) = rest.iter().position(|&b| b == b'\n') {
        records.push(rest[..nl].to_vec());
        rest = &rest[nl + 1..];
    }
    if !rest.is_empty() {
        let mut tail = rest.to_vec();
        let mut next = split.block_index + 1;
        while next < split.file_blocks {
            let more = fetch(next)?;
            match more.iter().position(|&b| b == b'\n') {
                Some(nl) => {
                    tail.extend_from_slice(&more[..nl]);
                    break;
                }
                None => tail.extend_from_slice(&more),
            }
            next += 1;
        }
        records.push(tail);
    }
    Ok(records)
}
