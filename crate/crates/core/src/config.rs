//! Cluster configuration: a line-oriented `key = value` file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::fabric::{ClockMode, FabricConfig};

pub const MIN_BLOCK_SIZE: u64 = 4096;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterConfig {
    pub storage_root: PathBuf,
    pub block_nodes: u32,
    pub task_runners: u32,
    pub block_size_bytes: u64,
    pub replication: u16,
    pub heartbeat_interval_ms: u64,
    pub heartbeat_timeout_intervals: u64,
    pub max_task_attempts: u32,
    pub clock: ClockMode,
}

impl ClusterConfig {
    pub fn new(storage_root: impl Into<PathBuf>) -> Self {
        ClusterConfig {
            storage_root: storage_root.into(),
            block_nodes: 2,
            task_runners: 2,
            block_size_bytes: 1 << 20,
            replication: 2,
            heartbeat_interval_ms: 1000,
            heartbeat_timeout_intervals: 3,
            max_task_attempts: 4,
            clock: ClockMode::Simulated { seed: 42 },
        }
    }

    /// Parses config text. A relative `storage_root` resolves against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg = ClusterConfig::new(base);
        let mut root_seen = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ConfigError::Parse { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| {
                v.parse::<u64>()
                    .map_err(|_| err(format!("{key}: not a non-negative integer: {v:?}")))
            };
            match key {
                "storage_root" => {
                    let p = PathBuf::from(value);
                    cfg.storage_root = if p.is_absolute() { p } else { base.join(p) };
                    root_seen = true;
                }
                "block_nodes" => cfg.block_nodes = narrow(num(value)?, key).map_err(err)?,
                "task_runners" => cfg.task_runners = narrow(num(value)?, key).map_err(err)?,
                "block_size_bytes" => cfg.block_size_bytes = num(value)?,
                "replication" => cfg.replication = narrow(num(value)?, key).map_err(err)?,
                "heartbeat_interval_ms" => cfg.heartbeat_interval_ms = num(value)?,
                "heartbeat_timeout_intervals" => cfg.heartbeat_timeout_intervals = num(value)?,
                "max_task_attempts" => cfg.max_task_attempts = narrow(num(value)?, key).map_err(err)?,
                "clock" => cfg.clock = value.parse().map_err(|e: String| err(e))?,
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        if !root_seen {
            return Err(ConfigError::Invalid("storage_root is required".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Counts are at least 1 (block nodes and runners are checked at start)
    /// and blocks are at least [`MIN_BLOCK_SIZE`].
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.block_size_bytes < MIN_BLOCK_SIZE {
            return bad("block_size_bytes must be at least 4096");
        }
        if self.replication == 0 {
            return bad("replication must be at least 1");
        }
        if self.heartbeat_interval_ms < 10 {
            return bad("heartbeat_interval_ms must be at least 10");
        }
        if self.heartbeat_timeout_intervals == 0 {
            return bad("heartbeat_timeout_intervals must be at least 1");
        }
        if self.max_task_attempts == 0 {
            return bad("max_task_attempts must be at least 1");
        }
        Ok(())
    }

    pub fn fabric_config(&self) -> FabricConfig {
        FabricConfig {
            heartbeat_interval_ms: self.heartbeat_interval_ms,
            heartbeat_timeout_intervals: self.heartbeat_timeout_intervals,
            max_frame_bytes: FabricConfig::default()
                .max_frame_bytes
                .max(self.block_size_bytes as usize + 64),
            ..FabricConfig::default()
        }
    }

    /// Control loop period.
    pub fn tick_ms(&self) -> u64 {
        (self.heartbeat_interval_ms / 10).max(1)
    }
}

fn narrow<T: TryFrom<u64>>(v: u64, key: &str) -> Result<T, String> {
    T::try_from(v).map_err(|_| format!("{key}: value {v} out of range"))
}

impl fmt::Display for ClusterConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "storage_root = {}", self.storage_root.display())?;
        writeln!(f, "block_nodes = {}", self.block_nodes)?;
        writeln!(f, "task_runners = {}", self.task_runners)?;
        writeln!(f, "block_size_bytes = {}", self.block_size_bytes)?;
        writeln!(f, "replication = {}", self.replication)?;
        writeln!(f, "heartbeat_interval_ms = {}", self.heartbeat_interval_ms)?;
        writeln!(f, "heartbeat_timeout_intervals = {}", self.heartbeat_timeout_intervals)?;
        writeln!(f, "max_task_attempts = {}", self.max_task_attempts)?;
        writeln!(f, "clock = {}", self.clock)
    }
}
