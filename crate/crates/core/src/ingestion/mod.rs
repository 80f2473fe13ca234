//! Plant telemetry: line simulators producing sensor records and the batcher
//! that lands them in the filesystem.

mod plant;
mod record;

pub use plant::{
    expected_records, parse_plant, plant_records, ChannelSpec, LineSpec, MilliHz, PlantError, RobotFault, RobotSpec,
    Waveform,
};
pub use record::{format_micros, parse_micros, Micros, SensorRecord, MICROS};

use crate::blockstore::{DfsClient, Mode, Principal};
use crate::cluster::Cluster;
use crate::error::{Error, Result};

pub const DEFAULT_BATCH_SIZE: usize = 1000;

pub fn batch_name(seq: u64) -> String {
    format!("batch-{seq:06}.jsonl")
}

/// Buffers records and writes one file per `batch_size` records.
#[derive(Debug, Clone)]
pub struct IngestBatcher {
    pub batch_size: usize,
    pub target_dir: String,
    pub file_seq: u64,
    pub replication: u16,
    buffer: Vec<SensorRecord>,
}

impl IngestBatcher {
    pub fn new(target_dir: impl Into<String>, batch_size: usize, replication: u16) -> Self {
        assert!(batch_size > 0, "batch size must be positive");
        IngestBatcher {
            batch_size,
            target_dir: target_dir.into().trim_end_matches('/').to_string(),
            file_seq: 0,
            replication,
            buffer: Vec::new(),
        }
    }

    /// Returns the path of the file flushed by this record, if any.
    pub fn accept(&mut self, record: SensorRecord, client: &mut DfsClient<'_>) -> Result<Option<String>> {
        self.buffer.push(record);
        if self.buffer.len() >= self.batch_size {
            self.flush(client)
        } else {
            Ok(None)
        }
    }

    pub fn flush(&mut self, client: &mut DfsClient<'_>) -> Result<Option<String>> {
        if self.buffer.is_empty() {
            return Ok(None);
        }
        let mut text = String::new();
        for r in self.buffer.drain(..) {
            text.push_str(&r.to_json_line());
            text.push('\n');
        }
        let path = format!("{}/{}", self.target_dir, batch_name(self.file_seq));
        client.put(&path, text.as_bytes(), Mode::new(0o750), self.replication)?;
        self.file_seq += 1;
        Ok(Some(path))
    }
}

/// Feeds records to the batcher in order, running the cluster up to each
/// record's timestamp first. Returns the files written.
pub fn ingest(
    cluster: &mut Cluster,
    records: impl IntoIterator<Item = SensorRecord>,
    batcher: &mut IngestBatcher,
    principal: &Principal,
) -> Result<Vec<String>> {
    let mut written = Vec::new();
    cluster.client(principal.clone()).mkdirs(&batcher.target_dir, crate::blockstore::DEFAULT_DIR_MODE)?;
    for r in records {
        cluster.advance_to(r.ts_ms);
        written.extend(batcher.accept(r, &mut cluster.client(principal.clone()))?);
    }
    written.extend(batcher.flush(&mut cluster.client(principal.clone()))?);
    Ok(written)
}

/// Runs every line of the plant for `duration_ms` from the cluster's current
/// time and ingests the merged stream.
pub fn run_plant(
    cluster: &mut Cluster,
    lines: &[LineSpec],
    duration_ms: u64,
    batcher: &mut IngestBatcher,
    principal: &Principal,
) -> Result<(u64, Vec<String>)> {
    let start = cluster.now();
    let records = plant_records(lines, duration_ms, start);
    let count = records.len() as u64;
    let files = ingest(cluster, records, batcher, principal)?;
    cluster.advance_to(start + duration_ms);
    Ok((count, files))
}

/// Parses newline-delimited records; line numbers in errors are 1-based.
pub fn parse_records(path: &str, text: &str) -> Result<Vec<SensorRecord>> {
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            SensorRecord::parse_json_line(l).map_err(|msg| Error::MalformedRecord {
                path: path.to_string(),
                line: i + 1,
                msg,
            })
        })
        .collect()
}

pub fn replay(client: &mut DfsClient<'_>, path: &str) -> Result<Vec<SensorRecord>> {
    let bytes = client.read(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::MalformedRecord {
        path: path.to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    parse_records(path, &text)
}
