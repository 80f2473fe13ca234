//! Builtin jobs: the quasi-Monte-Carlo Pi estimator, sensor aggregation and
//! a sum-by-key job, plus the drivers that stage inputs and read results.

mod halton;
mod sensor;

pub use halton::{
    estimate_pi, halton_point, is_inside, pi_map, pi_reduce, radical_inverse, PiCounts, ESTIMATE_DIGITS,
    MAX_TOTAL_SAMPLES,
};
pub use sensor::{fold_group, parse_agg_line, render_agg, sensor_agg_job, AggRow, SensorAggRun};

use std::io::Write;

use crate::blockstore::{Mode, Principal};
use crate::cluster::{Cluster, JobObserver};
use crate::error::{Error, Result};
use crate::mapreduce::{part_name, Emitter, FunctionRegistry, JobSpec};

fn parse_u64(b: &[u8]) -> Result<u64, String> {
    std::str::from_utf8(b)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| format!("not an unsigned integer: {:?}", String::from_utf8_lossy(b)))
}

fn parse_i64(b: &[u8]) -> Result<i64, String> {
    std::str::from_utf8(b)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| format!("not an integer: {:?}", String::from_utf8_lossy(b)))
}

/// Record `task \t samples`; emits `inside` and `outside` counts.
fn pi_map_fn(record: &[u8], em: &mut Emitter) -> Result<(), String> {
    if record.is_empty() {
        return Ok(());
    }
    let mut fields = record.split(|&b| b == b'\t');
    let (Some(t), Some(s), None) = (fields.next(), fields.next(), fields.next()) else {
        return Err(format!("bad pi input record {:?}", String::from_utf8_lossy(record)));
    };
    let counts = pi_map(parse_u64(t)?, parse_u64(s)?);
    em.emit("inside", counts.inside.to_string());
    em.emit("outside", counts.outside.to_string());
    Ok(())
}

/// Record `key \t integer`.
fn sum_map_fn(record: &[u8], em: &mut Emitter) -> Result<(), String> {
    if record.is_empty() {
        return Ok(());
    }
    let tab = record
        .iter()
        .rposition(|&b| b == b'\t')
        .ok_or_else(|| format!("bad sum record {:?}", String::from_utf8_lossy(record)))?;
    parse_i64(&record[tab + 1..])?;
    em.emit(&record[..tab], &record[tab + 1..]);
    Ok(())
}

fn sum_reduce_fn(_key: &[u8], values: &[&[u8]]) -> Result<Vec<u8>, String> {
    let mut total: i128 = 0;
    for v in values {
        total += parse_i64(v)? as i128;
    }
    Ok(total.to_string().into_bytes())
}

pub fn builtin_registry() -> FunctionRegistry {
    FunctionRegistry::new()
        .with_map("pi_map", pi_map_fn)
        .with_reduce("pi_reduce", sum_reduce_fn)
        .with_map("sum_map", sum_map_fn)
        .with_reduce("sum_reduce", sum_reduce_fn)
        .with_map("sensor_map", sensor::sensor_map_fn)
        .with_reduce("sensor_reduce", sensor::sensor_reduce_fn)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PiRun {
    pub job_id: String,
    pub counts: PiCounts,
    pub estimate: String,
}

/// Stages one input file per map, runs the job and prints the estimate.
/// `out` receives exactly the console trace; progress goes to `progress`.
pub fn pi_job(
    cluster: &mut Cluster,
    maps: u64,
    samples: u64,
    principal: &Principal,
    out: &mut dyn Write,
    progress: &mut dyn Write,
    observer: JobObserver<'_>,
) -> Result<PiRun> {
    if maps == 0 || samples == 0 {
        return Err(Error::Usage("pi needs at least one map and one sample".into()));
    }
    if maps.checked_mul(samples).is_none_or(|n| n > MAX_TOTAL_SAMPLES) {
        return Err(Error::Usage(format!("maps * samples must not exceed {MAX_TOTAL_SAMPLES}")));
    }
    let console = |out: &mut dyn Write, line: String| -> Result<()> {
        writeln!(out, "{line}").map_err(|e| Error::io("<stdout>", e))
    };
    let job_id = cluster.next_job_id();
    let base = format!("/tmp/pi_{job_id}");
    let (input, output) = (format!("{base}/in"), format!("{base}/out"));
    console(out, format!("Number of Maps = {maps}"))?;
    console(out, format!("Samples per Map = {samples}"))?;
    let replication = cluster.config().replication;
    for t in 0..maps {
        let path = format!("{input}/part-{t:05}");
        cluster
            .client(principal.clone())
            .put(&path, format!("{t}\t{samples}\n").as_bytes(), Mode::new(0o750), replication)?;
        console(out, format!("Wrote input for Map #{t}"))?;
    }
    console(out, "Starting Job".into())?;
    let spec = JobSpec {
        job_id: job_id.clone(),
        map_fn: "pi_map".into(),
        reduce_fn: "pi_reduce".into(),
        input_paths: vec![input],
        output_path: output.clone(),
        num_reduces: 1,
        max_attempts: cluster.config().max_task_attempts,
    };
    cluster.submit_job(spec, principal.clone())?;
    cluster.run_job(&job_id, progress, observer)?;
    let text = cluster.client(principal.clone()).read(&format!("{output}/{}", part_name(0)))?;
    let counts = parse_pi_output(&text).map_err(|m| Error::MalformedRecord {
        path: output.clone(),
        line: 0,
        msg: m,
    })?;
    if counts.total() != maps * samples {
        return Err(Error::MalformedRecord {
            path: output,
            line: 0,
            msg: format!("counted {} samples, expected {}", counts.total(), maps * samples),
        });
    }
    let estimate = estimate_pi(counts.inside, maps, samples);
    console(out, format!("Estimated value of Pi is {estimate}"))?;
    Ok(PiRun {
        job_id,
        counts,
        estimate,
    })
}

fn parse_pi_output(bytes: &[u8]) -> Result<PiCounts, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
    let mut counts = PiCounts::default();
    for line in text.lines() {
        let (k, v) = line.split_once('\t').ok_or_else(|| format!("bad output line {line:?}"))?;
        let v = v.parse::<u64>().map_err(|_| format!("bad count {v:?}"))?;
        match k {
            "inside" => counts.inside = v,
            "outside" => counts.outside = v,
            _ => return Err(format!("unexpected key {k:?}")),
        }
    }
    Ok(counts)
}
