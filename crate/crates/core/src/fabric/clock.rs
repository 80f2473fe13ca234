use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// How logical time relates to the wall clock.
///
/// In `Simulated` mode every timestamp comes from the logical clock and the
/// seed drives all nondeterminism (latency jitter, placement, task timing).
/// In `Real` mode the same logical clock is paced against wall time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClockMode {
    Real,
    Simulated { seed: u64 },
}

impl ClockMode {
    pub fn is_simulated(self) -> bool {
        matches!(self, ClockMode::Simulated { .. })
    }
}

impl fmt::Display for ClockMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClockMode::Real => f.write_str("real"),
            ClockMode::Simulated { seed } => write!(f, "simulated:{seed}"),
        }
    }
}

impl FromStr for ClockMode {
    type Err = String;

    /// Accepts `real`, `simulated` (seed 0) or `simulated:<seed>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "real" {
            return Ok(ClockMode::Real);
        }
        match s.strip_prefix("simulated") {
            Some("") => Ok(ClockMode::Simulated { seed: 0 }),
            Some(rest) => rest
                .strip_prefix(':')
                .and_then(|n| n.trim().parse().ok())
                .map(|seed| ClockMode::Simulated { seed })
                .ok_or_else(|| format!("bad clock seed in {s:?}")),
            None => Err(format!("unknown clock mode {s:?}")),
        }
    }
}

/// Logical millisecond clock.
#[derive(Debug, Clone)]
pub struct Clock {
    mode: ClockMode,
    now_ms: u64,
    // Real mode: wall instant corresponding to `paced_from_ms`.
    anchor: Option<(Instant, u64)>,
}

impl Clock {
    pub fn new(mode: ClockMode, now_ms: u64) -> Self {
        Clock {
            mode,
            now_ms,
            anchor: None,
        }
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn now(&self) -> u64 {
        self.now_ms
    }

    /// Moves logical time forward. Never moves backwards. In real mode this
    /// sleeps until the wall clock has caught up with the new logical time.
    pub fn advance_to(&mut self, t: u64) {
        if t <= self.now_ms {
            return;
        }
        if self.mode == ClockMode::Real {
            let (start, base) = *self.anchor.get_or_insert((Instant::now(), self.now_ms));
            let target = start + Duration::from_millis(t - base);
            let now = Instant::now();
            if target > now {
                std::thread::sleep(target - now);
            }
        }
        self.now_ms = t;
    }
}
