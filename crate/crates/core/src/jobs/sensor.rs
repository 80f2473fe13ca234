//! Per-(line, robot, channel) count, min, mean and max over ingested records.

use std::io::Write;

use crate::blockstore::Principal;
use crate::cluster::{Cluster, JobObserver};
use crate::error::Result;
use crate::ingestion::{format_micros, parse_micros, Micros, SensorRecord};
use crate::mapreduce::{Emitter, JobSpec};

pub const AGGREGATED: &str = "records_aggregated";
pub const SKIPPED: &str = "records_skipped";

pub(super) fn sensor_map_fn(record: &[u8], em: &mut Emitter) -> Result<(), String> {
    let parsed = std::str::from_utf8(record)
        .map_err(|e| e.to_string())
        .and_then(SensorRecord::parse_json_line);
    match parsed {
        Ok(r) => {
            em.count(AGGREGATED, 1);
            em.emit(r.group_key(), r.value.to_string());
        }
        Err(_) => em.count(SKIPPED, 1),
    }
    Ok(())
}

pub(super) fn sensor_reduce_fn(_key: &[u8], values: &[&[u8]]) -> Result<Vec<u8>, String> {
    let vals = values
        .iter()
        .map(|v| {
            std::str::from_utf8(v)
                .ok()
                .and_then(|s| s.parse::<Micros>().ok())
                .ok_or_else(|| format!("bad value {:?}", String::from_utf8_lossy(v)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(render_agg(&fold_group(&vals)).into_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggRow {
    pub count: u64,
    pub min: Micros,
    /// Rounded half up to a whole micro.
    pub mean: Micros,
    pub max: Micros,
}

/// Folds a non-empty group.
pub fn fold_group(values: &[Micros]) -> AggRow {
    assert!(!values.is_empty(), "a key group has at least one value");
    let count = values.len() as i128;
    let sum: i128 = values.iter().map(|&v| v as i128).sum();
    let mean = (2 * sum + count).div_euclid(2 * count) as Micros;
    AggRow {
        count: values.len() as u64,
        min: *values.iter().min().expect("non-empty"),
        mean,
        max: *values.iter().max().expect("non-empty"),
    }
}

/// `count,min,mean,max` with six fractional digits.
pub fn render_agg(row: &AggRow) -> String {
    format!(
        "{},{},{},{}",
        row.count,
        format_micros(row.min),
        format_micros(row.mean),
        format_micros(row.max)
    )
}

/// Parses one output line `line,robot,channel \t count,min,mean,max`.
pub fn parse_agg_line(text: &str) -> Option<(String, AggRow)> {
    let (key, rest) = text.split_once('\t')?;
    let f: Vec<&str> = rest.split(',').collect();
    let [count, min, mean, max] = f[..] else {
        return None;
    };
    Some((
        key.to_string(),
        AggRow {
            count: count.parse().ok()?,
            min: parse_micros(min)?,
            mean: parse_micros(mean)?,
            max: parse_micros(max)?,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SensorAggRun {
    pub job_id: String,
    pub output_path: String,
    pub aggregated: u64,
    pub skipped: u64,
}

pub fn sensor_agg_job(
    cluster: &mut Cluster,
    input_dir: &str,
    output_dir: &str,
    principal: &Principal,
    progress: &mut dyn Write,
    observer: JobObserver<'_>,
) -> Result<SensorAggRun> {
    let job_id = cluster.next_job_id();
    let spec = JobSpec {
        job_id: job_id.clone(),
        map_fn: "sensor_map".into(),
        reduce_fn: "sensor_reduce".into(),
        input_paths: vec![input_dir.to_string()],
        output_path: output_dir.to_string(),
        num_reduces: 1,
        max_attempts: cluster.config().max_task_attempts,
    };
    cluster.submit_job(spec, principal.clone())?;
    cluster.run_job(&job_id, progress, observer)?;
    let counters = cluster
        .job_master()
        .job(&job_id)
        .map(|j| j.counters())
        .unwrap_or_default();
    Ok(SensorAggRun {
        job_id,
        output_path: output_dir.trim_end_matches('/').to_string(),
        aggregated: counters.get(AGGREGATED).copied().unwrap_or(0),
        skipped: counters.get(SKIPPED).copied().unwrap_or(0),
    })
}
